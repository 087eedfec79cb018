//! Chart-based calibration: patch grouping, per-group polynomial transforms,
//! whole-image application, and ΔE76 evaluation.
//!
//! A calibration profile maps device RGB to CIE XYZ in three steps: gray
//! balancing through the fitted channel curves, classification of the color
//! by the nearest of up to three device-RGB centroids, and multiplication of
//! the 11-term polynomial feature vector by that group's 3×11 matrix.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::color::{delta_e76, xyz_to_lab, DeviceRgb, GrayBalance, LinearRgb, WhitePoint, Xyz};
use crate::error::{Error, Result};
use crate::kmeans;

/// Patches closer than this (device-RGB Euclidean distance, 0–255 scale) to
/// the skin centroid form the skin-toned training set. Distances are taken on
/// raw device values, before linearization.
pub const SKIN_GROUP_DISTANCE: f64 = 80.0;

/// Mean chart ΔE76 above which a calibration is flagged as an outlier.
pub const OUTLIER_MEAN_DELTA_E: f64 = 3.0;

/// One chart patch: mean device color over its annotated center region paired
/// with the spectrophotometer reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchObservation {
    pub patch_id: u32,
    pub mean_rgb: DeviceRgb,
    pub reference_xyz: Xyz,
}

/// Three-way grouping of chart patches with the centroids used to classify
/// image pixels later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    /// Centroid of each set, indexed by set (0-based).
    pub centroids: [DeviceRgb; 3],
    /// patch_id → set index (0-based). Every observed patch appears exactly once.
    pub membership: BTreeMap<u32, usize>,
}

impl GroupAssignment {
    /// Patch ids of one set, ascending.
    pub fn set_members(&self, set: usize) -> Vec<u32> {
        self.membership
            .iter()
            .filter(|&(_, &s)| s == set)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// Feature basis of a fitted transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// Full 11-term polynomial basis.
    #[serde(rename = "poly11")]
    Poly11,
    /// Reduced affine basis [R, G, B, 1], used when a set has too few patches
    /// to determine the quadratic terms.
    #[serde(rename = "affine4")]
    Affine4,
}

/// 3×11 matrix mapping the polynomial feature vector to XYZ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformMatrix {
    /// Rows X, Y, Z over the 11 features (row-major).
    pub rows: [[f64; 11]; 3],
    pub basis: Basis,
}

impl TransformMatrix {
    pub fn apply(&self, features: &[f64; 11]) -> Xyz {
        let mut out = [0.0f64; 3];
        for (o, row) in out.iter_mut().zip(self.rows.iter()) {
            *o = row.iter().zip(features.iter()).map(|(a, b)| a * b).sum();
        }
        Xyz::new(out[0], out[1], out[2])
    }
}

/// Polynomial expansion of a linearized color:
/// `[R, G, B, R², G², B², RG, GB, RB, RGB, 1]`.
pub fn polynomial_features(c: LinearRgb) -> [f64; 11] {
    let (r, g, b) = (c.r, c.g, c.b);
    [r, g, b, r * r, g * g, b * b, r * g, g * b, r * b, r * g * b, 1.0]
}

/// Fit one group's transform by ridge-stabilized least squares.
///
/// Solves the normal equations with a relative ridge of 1e-8 per feature
/// (see [`ridge_solve`]). Groups with fewer than 11 patches are refit on the
/// affine basis and zero-padded back to 3×11.
pub fn fit_transform(features: &[[f64; 11]], targets: &[Xyz]) -> Result<TransformMatrix> {
    if features.is_empty() {
        return Err(Error::FitFailed("cannot fit a transform on an empty set".into()));
    }
    if features.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows vs {} targets",
            features.len(),
            targets.len()
        )));
    }

    let n = features.len();
    let p = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => targets[i].x,
        1 => targets[i].y,
        _ => targets[i].z,
    });

    if n >= 11 {
        let q = DMatrix::from_fn(n, 11, |i, j| features[i][j]);
        let theta = ridge_solve(&q, &p, 1e-8)?;
        let mut rows = [[0.0f64; 11]; 3];
        for (c, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = theta[(j, c)];
            }
        }
        Ok(TransformMatrix { rows, basis: Basis::Poly11 })
    } else {
        // Affine columns of the full basis: R, G, B and the constant term.
        const AFFINE_COLS: [usize; 4] = [0, 1, 2, 10];
        let q = DMatrix::from_fn(n, 4, |i, j| features[i][AFFINE_COLS[j]]);
        let theta = ridge_solve(&q, &p, 1e-8)?;
        let mut rows = [[0.0f64; 11]; 3];
        for (c, row) in rows.iter_mut().enumerate() {
            for (j, &col) in AFFINE_COLS.iter().enumerate() {
                row[col] = theta[(j, c)];
            }
        }
        Ok(TransformMatrix { rows, basis: Basis::Affine4 })
    }
}

// Cholesky solve of the ridge normal equations. Columns are equilibrated to
// unit Gram diagonal first, so the ridge acts relative to each feature's own
// energy; polynomial features span twelve orders of magnitude at luminance
// scale and a single absolute shift would crush the low-order terms. The
// ridge grows until the factorization succeeds, so rank deficiency is never
// a hard failure.
pub(crate) fn ridge_solve(q: &DMatrix<f64>, p: &DMatrix<f64>, rel_ridge: f64) -> Result<DMatrix<f64>> {
    let k = q.ncols();
    let gram = q.transpose() * q;
    let rhs = q.transpose() * p;

    let scale: Vec<f64> = (0..k)
        .map(|i| gram[(i, i)].sqrt().max(f64::MIN_POSITIVE.sqrt()))
        .collect();
    let mut eq = gram.clone();
    let mut eq_rhs = rhs.clone();
    for i in 0..k {
        for j in 0..k {
            eq[(i, j)] /= scale[i] * scale[j];
        }
        for c in 0..eq_rhs.ncols() {
            eq_rhs[(i, c)] /= scale[i];
        }
    }

    let mut lambda = rel_ridge;
    for _ in 0..8 {
        let mut m = eq.clone();
        for i in 0..k {
            m[(i, i)] += lambda;
        }
        if let Some(chol) = m.cholesky() {
            let mut theta = chol.solve(&eq_rhs);
            // Two rounds of iterative refinement against the unshifted
            // equations remove the ridge bias wherever the system determines
            // the solution; null directions stay at the regularized value.
            for _ in 0..2 {
                let residual = &eq_rhs - &eq * &theta;
                theta += chol.solve(&residual);
            }
            for i in 0..k {
                for c in 0..theta.ncols() {
                    theta[(i, c)] /= scale[i];
                }
            }
            return Ok(theta);
        }
        lambda *= 100.0;
    }
    Err(Error::FitFailed("normal equations not positive definite".into()))
}

/// Group chart patches into up to three training sets.
///
/// With a skin centroid, Set 1 collects the patches within
/// [`SKIN_GROUP_DISTANCE`] of it and the remainder is split by 2-means; the
/// skin centroid itself is kept as Set 1's centroid. Without one (swatch
/// images), or when fewer than 3 patches remain outside Set 1, all three sets
/// come from 3-means. Membership depends only on the patch set, never on
/// input order.
pub fn group_patches(
    patches: &[PatchObservation],
    skin_centroid: Option<DeviceRgb>,
) -> Result<GroupAssignment> {
    if patches.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "grouping needs at least 3 patches, got {}",
            patches.len()
        )));
    }
    let mut sorted: Vec<(u32, DeviceRgb)> = patches.iter().map(|p| (p.patch_id, p.mean_rgb)).collect();
    sorted.sort_unstable_by_key(|&(id, _)| id);
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput("duplicate patch ids".into()));
    }

    if let Some(skin) = skin_centroid {
        let (set1, rest): (Vec<_>, Vec<_>) = sorted
            .iter()
            .copied()
            .partition(|(_, c)| c.distance(&skin) < SKIN_GROUP_DISTANCE);
        if rest.len() >= 3 {
            let (km_centroids, km_assign) = kmeans::lloyd(&rest, 2);
            let mut membership = BTreeMap::new();
            for (id, _) in &set1 {
                membership.insert(*id, 0);
            }
            for (i, (id, _)) in rest.iter().enumerate() {
                membership.insert(*id, 1 + km_assign[i]);
            }
            return Ok(GroupAssignment {
                centroids: [skin, km_centroids[0], km_centroids[1]],
                membership,
            });
        }
        // Not enough patches left for 2-means; regroup the whole chart.
    }

    let (centroids, assign) = kmeans::lloyd(&sorted, 3);
    let membership = sorted
        .iter()
        .zip(assign.iter())
        .map(|(&(id, _), &s)| (id, s))
        .collect();
    Ok(GroupAssignment {
        centroids: [centroids[0], centroids[1], centroids[2]],
        membership,
    })
}

/// Per-patch calibration errors of a profile against chart references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartEvaluation {
    /// (patch_id, ΔE76), ascending by patch id.
    pub per_patch: Vec<(u32, f64)>,
    pub mean_delta_e: f64,
    /// Mean ΔE76 above [`OUTLIER_MEAN_DELTA_E`].
    pub outlier: bool,
    pub white_point: WhitePoint,
}

/// Everything needed to map device RGB to XYZ, plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub gray: GrayBalance,
    pub groups: GroupAssignment,
    /// One transform per set; `None` marks a set that ended up empty.
    pub transforms: [Option<TransformMatrix>; 3],
    pub source_image: Option<String>,
    pub diagnostics: Option<ChartEvaluation>,
}

impl CalibrationProfile {
    /// Set index a device color is classified into: nearest centroid among
    /// the sets that have a transform, ties to the lowest set index.
    pub fn classify(&self, c: DeviceRgb) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, t) in self.transforms.iter().enumerate() {
            if t.is_none() {
                continue;
            }
            let d = self.groups.centroids[i].distance(&c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Calibrate one device color to XYZ.
    pub fn calibrate(&self, c: DeviceRgb) -> Result<Xyz> {
        let set = self.classify(c);
        let transform = self.transforms[set]
            .as_ref()
            .expect("classify only returns sets with transforms");
        let lin = self.gray.linearize(c)?;
        Ok(transform.apply(&polynomial_features(lin)))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        crate::write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, Some(e.line() as u64), e.to_string()))
    }
}

/// Fit a complete calibration profile from chart observations.
///
/// `gray_ids` names the neutral patches used for gray balancing and must all
/// be present among the observations. The optional skin centroid switches the
/// grouping to the skin-anchored mode.
pub fn build_profile(
    chart_obs: &[PatchObservation],
    gray_ids: &[u32],
    skin_centroid: Option<DeviceRgb>,
    white: WhitePoint,
    source_image: Option<String>,
) -> Result<CalibrationProfile> {
    let by_id: BTreeMap<u32, &PatchObservation> =
        chart_obs.iter().map(|p| (p.patch_id, p)).collect();
    if by_id.len() != chart_obs.len() {
        return Err(Error::InvalidInput("duplicate patch ids in chart observations".into()));
    }

    let mut gray_patches = Vec::with_capacity(gray_ids.len());
    for id in gray_ids {
        let obs = by_id.get(id).ok_or_else(|| {
            Error::InvalidInput(format!("gray patch {id} missing from observations"))
        })?;
        gray_patches.push((obs.mean_rgb, obs.reference_xyz.y));
    }
    let (rp, gp, bp) = crate::gray::gray_pairs(&gray_patches);
    let gray = crate::gray::fit_gray_balance(&rp, &gp, &bp)?;

    let groups = group_patches(chart_obs, skin_centroid)?;

    let mut transforms: [Option<TransformMatrix>; 3] = [None, None, None];
    for set in 0..3 {
        let members = groups.set_members(set);
        if members.is_empty() {
            continue;
        }
        let mut features = Vec::with_capacity(members.len());
        let mut targets = Vec::with_capacity(members.len());
        for id in &members {
            let obs = by_id[id];
            features.push(polynomial_features(gray.linearize(obs.mean_rgb)?));
            targets.push(obs.reference_xyz);
        }
        transforms[set] = Some(fit_transform(&features, &targets)?);
    }

    let mut profile = CalibrationProfile {
        gray,
        groups,
        transforms,
        source_image,
        diagnostics: None,
    };
    profile.diagnostics = Some(evaluate_chart(&profile, chart_obs, white)?);
    Ok(profile)
}

/// Calibrate each patch mean and report ΔE76 against the references.
pub fn evaluate_chart(
    profile: &CalibrationProfile,
    chart_obs: &[PatchObservation],
    white: WhitePoint,
) -> Result<ChartEvaluation> {
    if chart_obs.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty chart".into()));
    }
    let mut per_patch = Vec::with_capacity(chart_obs.len());
    for obs in chart_obs {
        let calibrated = profile.calibrate(obs.mean_rgb)?;
        let de = delta_e76(xyz_to_lab(calibrated, white), xyz_to_lab(obs.reference_xyz, white));
        per_patch.push((obs.patch_id, de));
    }
    per_patch.sort_unstable_by_key(|&(id, _)| id);
    let mean = per_patch.iter().map(|&(_, d)| d).sum::<f64>() / per_patch.len() as f64;
    Ok(ChartEvaluation {
        per_patch,
        mean_delta_e: mean,
        outlier: mean > OUTLIER_MEAN_DELTA_E,
        white_point: white,
    })
}

/// Row-major image of calibrated XYZ values.
#[derive(Debug, Clone, PartialEq)]
pub struct XyzImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Xyz>,
}

impl XyzImage {
    pub fn get(&self, x: u32, y: u32) -> Xyz {
        self.pixels[(y * self.width + x) as usize]
    }
}

/// Calibrate a whole 8-bit image to XYZ, pixel by pixel.
pub fn apply_profile(img: &image::RgbImage, profile: &CalibrationProfile) -> Result<XyzImage> {
    let mut pixels = Vec::with_capacity((img.width() * img.height()) as usize);
    for p in img.pixels() {
        pixels.push(profile.calibrate(DeviceRgb::from_u8(p.0[0], p.0[1], p.0[2]))?);
    }
    Ok(XyzImage {
        width: img.width(),
        height: img.height(),
        pixels,
    })
}
