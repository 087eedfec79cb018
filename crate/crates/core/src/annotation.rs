//! Annotation and reference-table files.
//!
//! A chart annotation names the image, one rectangle per patch, and the ids
//! of the neutral patches used for gray balancing. Region annotations for
//! swatch images reuse the same schema with a `shade` field per entry.
//! Reference tables are CSV with header `patch_id,X,Y,Z`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::{DeviceRgb, Xyz};
use crate::error::{Error, Result};

/// Default neutral-patch ids of the chart layout (inclusive range 6..=17).
pub fn default_gray_ids() -> Vec<u32> {
    (6..=17).collect()
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    /// Central region covering 50% of each dimension, used for patch means so
    /// the sampling tolerates annotation slop near patch borders.
    pub fn center_half(&self) -> Rect {
        let mx = self.w / 4;
        let my = self.h / 4;
        Rect {
            x: self.x + mx,
            y: self.y + my,
            w: (self.w - 2 * mx).max(1),
            h: (self.h - 2 * my).max(1),
        }
    }

    pub fn contains_within(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// One annotated rectangle: a numbered chart patch or a shade swatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shade: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    pub rect: Rect,
}

/// Annotation file: image path plus the rectangle list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image: String,
    pub patches: Vec<PatchRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gray_patch_ids: Option<Vec<u32>>,
}

impl Annotation {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, Some(e.line() as u64), e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        crate::write_atomic(path, json.as_bytes())
    }

    /// Gray-patch ids, falling back to the standard 6..=17 numbering.
    pub fn gray_ids(&self) -> Vec<u32> {
        self.gray_patch_ids.clone().unwrap_or_else(default_gray_ids)
    }
}

/// Mean device RGB over the central half of a rectangle.
pub fn rect_mean_rgb(img: &image::RgbImage, rect: Rect) -> Result<DeviceRgb> {
    if !rect.contains_within(img.width(), img.height()) {
        return Err(Error::InvalidInput(format!(
            "rect {rect:?} exceeds image {}x{}",
            img.width(),
            img.height()
        )));
    }
    let c = rect.center_half();
    let mut sum = [0.0f64; 3];
    for y in c.y..c.y + c.h {
        for x in c.x..c.x + c.w {
            let p = img.get_pixel(x, y);
            sum[0] += p.0[0] as f64;
            sum[1] += p.0[1] as f64;
            sum[2] += p.0[2] as f64;
        }
    }
    let n = (c.w * c.h) as f64;
    Ok(DeviceRgb::new(sum[0] / n, sum[1] / n, sum[2] / n))
}

/// Load a reference table: CSV `patch_id,X,Y,Z`, one row per patch.
pub fn load_references(path: &Path) -> Result<Vec<(u32, Xyz)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        let expected = ["patch_id", "X", "Y", "Z"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(
                path,
                Some(1),
                format!("expected header {expected:?}, got {headers:?}"),
            ));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record.position().map(|p| p.line());
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::parse(path, line, format!("missing column {i}")))
        };
        let id: u32 = field(0)?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("patch_id: {e}")))?;
        let mut xyz = [0.0f64; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            let raw = field(k + 1)?;
            *v = raw
                .parse()
                .map_err(|e| Error::parse(path, line, format!("column {}: {e}", k + 1)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value '{raw}'")));
            }
        }
        rows.push((id, Xyz::new(xyz[0], xyz[1], xyz[2])));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, None, "reference table has no rows"));
    }
    Ok(rows)
}

/// Write a reference table in the `patch_id,X,Y,Z` format.
pub fn save_references(path: &Path, rows: &[(u32, Xyz)]) -> Result<()> {
    let mut out = String::from("patch_id,X,Y,Z\n");
    for (id, xyz) in rows {
        out.push_str(&format!("{id},{},{},{}\n", xyz.x, xyz.y, xyz.z));
    }
    crate::write_atomic(path, out.as_bytes())
}
