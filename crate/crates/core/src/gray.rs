//! Gain-gamma-offset curve fitting for the gray-balancing stage.
//!
//! Each channel is fit to pairs of (device value, reference luminance Y) taken
//! from the neutral patches, minimizing the squared residual of
//! `gain * (v/255)^gamma + offset - y`. The fit is a nested optimization:
//! for a fixed gamma the optimal (gain, offset) has a closed form, and gamma
//! itself is found by golden-section search, so the result is deterministic.

use crate::color::{ChannelCurve, DeviceRgb, GrayBalance, GAMMA_RANGE};
use crate::error::{Error, Result};

/// Golden-section interval tolerance on gamma.
const GAMMA_TOL: f64 = 1e-4;

/// Fit one channel curve to `(device value, reference Y)` pairs.
///
/// Needs at least 3 pairs with non-constant device values.
pub fn fit_channel_curve(pairs: &[(f64, f64)]) -> Result<ChannelCurve> {
    if pairs.len() < 3 {
        return Err(Error::FitFailed(format!(
            "gray balance needs at least 3 pairs per channel, got {}",
            pairs.len()
        )));
    }
    let first = pairs[0].0;
    if pairs.iter().all(|&(v, _)| v == first) {
        return Err(Error::FitFailed(
            "gray balance device values are all equal".into(),
        ));
    }
    if pairs.iter().any(|&(v, y)| !v.is_finite() || !y.is_finite() || v < 0.0) {
        return Err(Error::FitFailed(
            "gray balance pairs must be finite with nonnegative device values".into(),
        ));
    }

    let gamma = golden_section_min(GAMMA_RANGE.0, GAMMA_RANGE.1, GAMMA_TOL, |g| {
        linear_fit_at_gamma(pairs, g).2
    });
    let (gain, offset, _) = linear_fit_at_gamma(pairs, gamma);
    if !(gain > 0.0) {
        return Err(Error::FitFailed(format!(
            "fitted gain {gain} is not positive; data is not an increasing response"
        )));
    }
    ChannelCurve::new(gain, gamma, offset)
}

/// Fit the three channel curves from per-channel pairs.
pub fn fit_gray_balance(
    r_pairs: &[(f64, f64)],
    g_pairs: &[(f64, f64)],
    b_pairs: &[(f64, f64)],
) -> Result<GrayBalance> {
    Ok(GrayBalance {
        r: fit_channel_curve(r_pairs)?,
        g: fit_channel_curve(g_pairs)?,
        b: fit_channel_curve(b_pairs)?,
    })
}

/// Convenience: build the per-channel pairs from gray-patch observations
/// given as (mean device RGB, reference Y).
pub fn gray_pairs(patches: &[(DeviceRgb, f64)]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let r = patches.iter().map(|&(c, y)| (c.r, y)).collect();
    let g = patches.iter().map(|&(c, y)| (c.g, y)).collect();
    let b = patches.iter().map(|&(c, y)| (c.b, y)).collect();
    (r, g, b)
}

// Least squares of y on the basis [(v/255)^gamma, 1]. Returns (gain, offset, sse).
fn linear_fit_at_gamma(pairs: &[(f64, f64)], gamma: f64) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let (mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0);
    for &(v, y) in pairs {
        let u = (v / 255.0).powf(gamma);
        su += u;
        suu += u * u;
        sy += y;
        suy += u * y;
    }
    let det = n * suu - su * su;
    if det.abs() < 1e-12 * n * suu.max(1.0) {
        // Collapsed basis (all u equal); any slope fits equally badly.
        return (0.0, sy / n, f64::INFINITY);
    }
    let gain = (n * suy - su * sy) / det;
    let offset = (sy - gain * su) / n;
    let sse = pairs
        .iter()
        .map(|&(v, y)| {
            let e = gain * (v / 255.0).powf(gamma) + offset - y;
            e * e
        })
        .sum();
    (gain, offset, sse)
}

// Golden-section search for the minimizer of f on [a, b]; returns the
// midpoint of the final interval once it shrinks below tol.
fn golden_section_min(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
