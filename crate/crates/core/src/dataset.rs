//! Calibrated region colors and assembly of the prediction dataset.
//!
//! Region colors are extracted from calibrated XYZ images by converting each
//! pixel to Lab and averaging component-wise. A sample row pairs a subject's
//! bare-skin color and a foundation swatch color (the 6-dim input) with the
//! measured skin-with-foundation color (the 3-dim target), keyed by
//! `(subject_id, shade)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::Rect;
use crate::chart::{XyzImage, OUTLIER_MEAN_DELTA_E};
use crate::color::{xyz_to_lab, Lab, WhitePoint};
use crate::error::{Error, Result};
use crate::skin::SkinMask;

/// What a region's color measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    BareSkin,
    FoundationSwatch,
    SkinWithFoundation,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::BareSkin => "bare_skin",
            Role::FoundationSwatch => "foundation_swatch",
            Role::SkinWithFoundation => "skin_with_foundation",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bare_skin" => Ok(Role::BareSkin),
            "foundation_swatch" => Ok(Role::FoundationSwatch),
            "skin_with_foundation" => Ok(Role::SkinWithFoundation),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// Mean Lab of one annotated region of one calibrated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionColor {
    /// Image identifier the region came from.
    pub source_id: String,
    /// Subject key for skin roles; swatch regions have none.
    pub subject_id: Option<String>,
    pub role: Role,
    /// Shade code for foundation roles (e.g. "130").
    pub shade: Option<String>,
    pub lab: Lab,
    pub pixel_count: usize,
    /// Mean chart ΔE76 of the source image's calibration, when known; used
    /// for outlier exclusion during assembly.
    pub chart_mean_de: Option<f64>,
}

impl RegionColor {
    /// Role/shade/subject consistency checks.
    pub fn validate(&self) -> Result<()> {
        if self.pixel_count == 0 {
            return Err(Error::InvalidInput("region has zero pixels".into()));
        }
        let needs_shade = matches!(self.role, Role::FoundationSwatch | Role::SkinWithFoundation);
        if needs_shade && self.shade.is_none() {
            return Err(Error::InvalidInput(format!(
                "{} region '{}' has no shade",
                self.role, self.source_id
            )));
        }
        let needs_subject = matches!(self.role, Role::BareSkin | Role::SkinWithFoundation);
        if needs_subject && self.subject_id.is_none() {
            return Err(Error::InvalidInput(format!(
                "{} region '{}' has no subject id",
                self.role, self.source_id
            )));
        }
        Ok(())
    }

    /// Whether the source image failed the calibration quality gate.
    pub fn is_outlier(&self) -> bool {
        self.chart_mean_de.is_some_and(|d| d > OUTLIER_MEAN_DELTA_E)
    }

    fn key(&self) -> (String, String, String) {
        (
            self.source_id.clone(),
            self.role.to_string(),
            self.shade.clone().unwrap_or_default(),
        )
    }
}

/// Pixel selector for region extraction.
pub enum Region<'a> {
    Mask(&'a SkinMask),
    Rect(Rect),
}

/// Identification carried along with an extraction.
#[derive(Debug, Clone, Default)]
pub struct RegionMeta {
    pub source_id: String,
    pub subject_id: Option<String>,
    pub shade: Option<String>,
    pub chart_mean_de: Option<f64>,
}

/// Average a region of a calibrated image in Lab.
///
/// Each pixel is converted to Lab first and the components are averaged;
/// averaging happens after the nonlinear conversion, not on XYZ means.
pub fn extract_region_color(
    xyz_img: &XyzImage,
    region: Region<'_>,
    white: WhitePoint,
    role: Role,
    meta: RegionMeta,
) -> Result<RegionColor> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    let mut add = |x: u32, y: u32| {
        let lab = xyz_to_lab(xyz_img.get(x, y), white);
        sum[0] += lab.l;
        sum[1] += lab.a;
        sum[2] += lab.b;
        count += 1;
    };
    match region {
        Region::Mask(mask) => {
            if mask.width() != xyz_img.width || mask.height() != xyz_img.height {
                return Err(Error::InvalidInput("mask does not match image dimensions".into()));
            }
            for (x, y) in mask.iter_set() {
                add(x, y);
            }
        }
        Region::Rect(rect) => {
            if !rect.contains_within(xyz_img.width, xyz_img.height) {
                return Err(Error::InvalidInput(format!(
                    "rect {rect:?} exceeds image {}x{}",
                    xyz_img.width, xyz_img.height
                )));
            }
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    add(x, y);
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion(format!(
            "region of '{}' selects no pixels",
            meta.source_id
        )));
    }
    let n = count as f64;
    let region = RegionColor {
        source_id: meta.source_id,
        subject_id: meta.subject_id,
        role,
        shade: meta.shade,
        lab: Lab::new(sum[0] / n, sum[1] / n, sum[2] / n),
        pixel_count: count,
        chart_mean_de: meta.chart_mean_de,
    };
    region.validate()?;
    Ok(region)
}

/// One training sample: bare-skin Lab ⊕ foundation Lab → with-foundation Lab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub subject_id: String,
    pub shade: String,
    /// [skin_L, skin_a, skin_b, fnd_L, fnd_a, fnd_b]
    pub input: [f64; 6],
    /// [out_L, out_a, out_b]
    pub target: [f64; 3],
}

/// Pair region colors into sample rows.
///
/// Regions whose source image was outlier-flagged are dropped before
/// pairing, and a with-foundation sample is dropped when its bare-skin or
/// swatch counterpart exists but was flagged. A counterpart that was never
/// measured is an error naming the subject and shade. Rows come out sorted
/// by `(subject_id, shade)` regardless of input order.
pub fn assemble_dataset(regions: &[RegionColor]) -> Result<Vec<SampleRow>> {
    for r in regions {
        r.validate()?;
    }

    let mut skin: BTreeMap<&str, &RegionColor> = BTreeMap::new();
    let mut swatch: BTreeMap<&str, &RegionColor> = BTreeMap::new();
    let mut with: BTreeMap<(&str, &str), &RegionColor> = BTreeMap::new();
    for r in regions {
        let dup = match r.role {
            Role::BareSkin => skin.insert(r.subject_id.as_deref().unwrap(), r).is_some(),
            Role::FoundationSwatch => swatch.insert(r.shade.as_deref().unwrap(), r).is_some(),
            Role::SkinWithFoundation => with
                .insert((r.subject_id.as_deref().unwrap(), r.shade.as_deref().unwrap()), r)
                .is_some(),
        };
        if dup {
            return Err(Error::InvalidInput(format!(
                "duplicate {} region for '{}'",
                r.role, r.source_id
            )));
        }
    }

    let mut rows = Vec::new();
    for (&(subject, shade), out) in &with {
        let bare = skin.get(subject).copied().ok_or_else(|| Error::UnpairedSample {
            subject: subject.into(),
            shade: shade.into(),
            missing: "bare-skin region",
        })?;
        let fnd = swatch.get(shade).copied().ok_or_else(|| Error::UnpairedSample {
            subject: subject.into(),
            shade: shade.into(),
            missing: "foundation swatch",
        })?;
        if out.is_outlier() || bare.is_outlier() || fnd.is_outlier() {
            continue;
        }
        rows.push(SampleRow {
            subject_id: subject.into(),
            shade: shade.into(),
            input: [bare.lab.l, bare.lab.a, bare.lab.b, fnd.lab.l, fnd.lab.a, fnd.lab.b],
            target: [out.lab.l, out.lab.a, out.lab.b],
        });
    }
    Ok(rows)
}

const DATASET_HEADER: &str =
    "subject_id,shade,skin_L,skin_a,skin_b,fnd_L,fnd_a,fnd_b,out_L,out_a,out_b";

/// Write sample rows as CSV. Float formatting is shortest-round-trip, so a
/// save/load cycle reproduces every value exactly.
pub fn save_dataset(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.subject_id,
            r.shade,
            r.input[0],
            r.input[1],
            r.input[2],
            r.input[3],
            r.input[4],
            r.input[5],
            r.target[0],
            r.target[1],
            r.target[2],
        ));
    }
    crate::write_atomic(path, out.as_bytes())
}

/// Load a sample-row CSV written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Vec<SampleRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        let expected: Vec<&str> = DATASET_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(path, Some(1), format!("expected header '{DATASET_HEADER}'")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record.position().map(|p| p.line());
        if record.len() != 11 {
            return Err(Error::parse(path, line, format!("expected 11 columns, got {}", record.len())));
        }
        let mut values = [0.0f64; 9];
        for (k, v) in values.iter_mut().enumerate() {
            let raw = &record[k + 2];
            *v = raw
                .parse()
                .map_err(|e| Error::parse(path, line, format!("column {}: {e}", k + 3)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value '{raw}'")));
            }
        }
        rows.push(SampleRow {
            subject_id: record[0].to_string(),
            shade: record[1].to_string(),
            input: values[..6].try_into().unwrap(),
            target: values[6..].try_into().unwrap(),
        });
    }
    Ok(rows)
}

const REGIONS_HEADER: &str = "source_id,subject_id,role,shade,L,a,b,pixel_count,chart_mean_de";

/// Write region colors as CSV (the accumulating extraction table).
pub fn save_regions(path: &Path, regions: &[RegionColor]) -> Result<()> {
    let mut out = String::from(REGIONS_HEADER);
    out.push('\n');
    for r in regions {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.source_id,
            r.subject_id.as_deref().unwrap_or(""),
            r.role,
            r.shade.as_deref().unwrap_or(""),
            r.lab.l,
            r.lab.a,
            r.lab.b,
            r.pixel_count,
            r.chart_mean_de.map(|d| d.to_string()).unwrap_or_default(),
        ));
    }
    crate::write_atomic(path, out.as_bytes())
}

/// Load a region-color CSV written by [`save_regions`].
pub fn load_regions(path: &Path) -> Result<Vec<RegionColor>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        let expected: Vec<&str> = REGIONS_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(path, Some(1), format!("expected header '{REGIONS_HEADER}'")));
        }
    }
    let mut regions = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record.position().map(|p| p.line());
        if record.len() != 9 {
            return Err(Error::parse(path, line, format!("expected 9 columns, got {}", record.len())));
        }
        let opt = |s: &str| if s.is_empty() { None } else { Some(s.to_string()) };
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|e| Error::parse(path, line, format!("{what}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite {what} '{s}'")));
            }
            Ok(v)
        };
        let role: Role = record[2]
            .parse()
            .map_err(|e: String| Error::parse(path, line, e))?;
        let region = RegionColor {
            source_id: record[0].to_string(),
            subject_id: opt(&record[1]),
            role,
            shade: opt(&record[3]),
            lab: Lab::new(
                parse_f(&record[4], "L")?,
                parse_f(&record[5], "a")?,
                parse_f(&record[6], "b")?,
            ),
            pixel_count: record[7]
                .parse()
                .map_err(|e| Error::parse(path, line, format!("pixel_count: {e}")))?,
            chart_mean_de: match &record[8] {
                "" => None,
                s => Some(parse_f(s, "chart_mean_de")?),
            },
        };
        region.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
        regions.push(region);
    }
    Ok(regions)
}

/// Append regions to a CSV, skipping entries whose `(source_id, role, shade)`
/// key is already present. Re-running the same extraction leaves the file
/// byte-identical.
pub fn append_regions(path: &Path, new: &[RegionColor]) -> Result<usize> {
    let mut existing = if path.exists() { load_regions(path)? } else { Vec::new() };
    let keys: std::collections::BTreeSet<_> = existing.iter().map(|r| r.key()).collect();
    let mut added = 0;
    for r in new {
        if !keys.contains(&r.key()) {
            existing.push(r.clone());
            added += 1;
        }
    }
    save_regions(path, &existing)?;
    Ok(added)
}
