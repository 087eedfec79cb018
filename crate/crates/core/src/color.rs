//! Color representations and colorimetric conversions.
//!
//! Four representations flow through the pipeline:
//! camera-encoded [`DeviceRgb`] → gray-balanced [`LinearRgb`] → [`Xyz`] → [`Lab`].
//! All arithmetic is f64; ΔE tolerances below 0.01 do not survive f32.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera-encoded RGB, nominal range [0, 255] per channel.
///
/// Pixels read from 8-bit images are integral; means over regions may be
/// fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl DeviceRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn from_u8(r: u8, g: u8, b: u8) -> Self {
        Self::new(r as f64, g as f64, b as f64)
    }

    /// Euclidean distance in device-RGB space.
    pub fn distance(&self, other: &DeviceRgb) -> f64 {
        let dr = self.r - other.r;
        let dg = self.g - other.g;
        let db = self.b - other.b;
        (dr * dr + dg * dg + db * db).sqrt()
    }
}

/// Gray-balanced (linearized) RGB, luminance-scaled, nominal range ≈ [0, 100].
///
/// Values may slightly exceed the nominal range; they are not clamped before
/// regression, only at final image export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl LinearRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }
}

/// CIE tristimulus values, scaled so the reference white has Y = 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// CIE 1976 L*a*b* coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

/// Tristimulus values of the reference white; all components strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint {
    pub xn: f64,
    pub yn: f64,
    pub zn: f64,
}

/// CIE standard illuminant D50, the white point of the reference measurements.
pub const D50: WhitePoint = WhitePoint {
    xn: 96.42,
    yn: 100.0,
    zn: 82.52,
};

impl WhitePoint {
    pub fn new(xn: f64, yn: f64, zn: f64) -> Result<Self> {
        if !(xn > 0.0 && yn > 0.0 && zn > 0.0) {
            return Err(Error::InvalidInput(format!(
                "white point components must be strictly positive, got ({xn}, {yn}, {zn})"
            )));
        }
        Ok(Self { xn, yn, zn })
    }
}

/// One channel of the gain-gamma-offset gray-balance model:
/// `linear = gain * (v / 255)^gamma + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCurve {
    pub gain: f64,
    pub gamma: f64,
    pub offset: f64,
}

/// Allowed gamma range for a valid gray-balance curve.
pub const GAMMA_RANGE: (f64, f64) = (0.2, 5.0);

impl ChannelCurve {
    pub fn new(gain: f64, gamma: f64, offset: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidInput(format!("gain must be positive, got {gain}")));
        }
        if !(GAMMA_RANGE.0..=GAMMA_RANGE.1).contains(&gamma) {
            return Err(Error::InvalidInput(format!(
                "gamma must lie in [{}, {}], got {gamma}",
                GAMMA_RANGE.0, GAMMA_RANGE.1
            )));
        }
        if !offset.is_finite() {
            return Err(Error::InvalidInput(format!("offset must be finite, got {offset}")));
        }
        Ok(Self { gain, gamma, offset })
    }

    /// Linearize one device-channel value through this curve.
    ///
    /// Monotone nondecreasing in `v` for `v >= 0`. Negative inputs are a
    /// domain error when `gamma` is non-integral (negative base).
    pub fn linearize(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("device value must be finite, got {v}")));
        }
        if v < 0.0 && self.gamma.fract() != 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative device value {v} with non-integral gamma {}",
                self.gamma
            )));
        }
        Ok(self.gain * (v / 255.0).powf(self.gamma) + self.offset)
    }

    /// Invert the curve: device value whose linearized value is `lin`.
    ///
    /// Requires `lin >= offset`; values below the offset are out of gamut for
    /// the curve.
    pub fn encode(&self, lin: f64) -> Result<f64> {
        if lin < self.offset {
            return Err(Error::InvalidInput(format!(
                "linear value {lin} below curve offset {}",
                self.offset
            )));
        }
        Ok(255.0 * ((lin - self.offset) / self.gain).powf(1.0 / self.gamma))
    }
}

/// Per-channel gain-gamma-offset parameters of the gray-balance stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrayBalance {
    pub r: ChannelCurve,
    pub g: ChannelCurve,
    pub b: ChannelCurve,
}

impl GrayBalance {
    /// Linearize a device color through the three channel curves.
    pub fn linearize(&self, c: DeviceRgb) -> Result<LinearRgb> {
        Ok(LinearRgb::new(
            self.r.linearize(c.r)?,
            self.g.linearize(c.g)?,
            self.b.linearize(c.b)?,
        ))
    }
}

// CIE 1976 companding function. Threshold and linear branch follow the
// standard definition: f(t) = t^(1/3) above (24/116)^3, linear continuation
// below. Negative ratios pass through the linear branch.
fn cie_f(t: f64) -> f64 {
    const T0: f64 = (24.0 / 116.0) * (24.0 / 116.0) * (24.0 / 116.0);
    if t > T0 {
        t.cbrt()
    } else {
        (t / 3.0) * (116.0 / 24.0) * (116.0 / 24.0) + 16.0 / 116.0
    }
}

fn cie_f_inv(u: f64) -> f64 {
    const U0: f64 = 24.0 / 116.0;
    if u > U0 {
        u * u * u
    } else {
        (u - 16.0 / 116.0) * 3.0 * (24.0 / 116.0) * (24.0 / 116.0)
    }
}

/// Convert CIE XYZ to CIE 1976 L*a*b* relative to the given white point.
pub fn xyz_to_lab(c: Xyz, w: WhitePoint) -> Lab {
    let fx = cie_f(c.x / w.xn);
    let fy = cie_f(c.y / w.yn);
    let fz = cie_f(c.z / w.zn);
    Lab::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Inverse of [`xyz_to_lab`].
pub fn lab_to_xyz(c: Lab, w: WhitePoint) -> Xyz {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    Xyz::new(w.xn * cie_f_inv(fx), w.yn * cie_f_inv(fy), w.zn * cie_f_inv(fz))
}

/// CIE 1976 color difference: Euclidean distance in L*a*b*.
pub fn delta_e76(p: Lab, q: Lab) -> f64 {
    let dl = p.l - q.l;
    let da = p.a - q.a;
    let db = p.b - q.b;
    (dl * dl + da * da + db * db).sqrt()
}
