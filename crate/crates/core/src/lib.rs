//! Camera color calibration from chart patches and prediction of
//! skin-with-foundation colors from calibrated measurements.
//!
//! The pipeline: detect skin pixels ([`skin`]), fit a calibration profile
//! from chart patch observations ([`gray`], [`chart`]), extract calibrated
//! region colors into a dataset ([`dataset`]), and train/evaluate the shade
//! predictors ([`model`]). The [`synth`] module generates ground-truth-known
//! charts and datasets so every stage can be verified end to end.

pub mod annotation;
pub mod chart;
pub mod color;
pub mod dataset;
pub mod error;
pub mod gray;
mod kmeans;
pub mod model;
pub mod skin;
mod svr;
pub mod synth;

pub use chart::{
    apply_profile, build_profile, evaluate_chart, fit_transform, group_patches,
    polynomial_features, CalibrationProfile, ChartEvaluation, GroupAssignment, PatchObservation,
    TransformMatrix, XyzImage,
};
pub use color::{
    delta_e76, lab_to_xyz, xyz_to_lab, ChannelCurve, DeviceRgb, GrayBalance, Lab, LinearRgb,
    WhitePoint, Xyz, D50,
};
pub use error::{Error, Result};
pub use gray::fit_gray_balance;
pub use skin::{is_skin_pixel, mask_mean_rgb, skin_mask, SkinMask};

use std::path::Path;

/// Write a file atomically: write to a sibling temp file, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Load an 8-bit RGB image (PNG or JPEG); other layouts are converted.
pub fn load_rgb8(path: &Path) -> Result<image::RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })?;
    Ok(img.to_rgb8())
}

/// Save an 8-bit RGB image as PNG, atomically.
pub fn save_rgb8(path: &Path, img: &image::RgbImage) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?;
    write_atomic(path, &bytes)
}
