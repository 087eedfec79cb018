//! Synthetic camera and dataset generation with known ground truth.
//!
//! A forward camera maps XYZ to linear RGB through an invertible 3×3 matrix
//! and encodes each channel with the inverse gain-gamma-offset curve, plus
//! optional Gaussian noise in device counts. Everything is reproducible
//! bit-exactly from `(seed, parameters)`; the stream is ChaCha8, consumed in
//! patch-id order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, PatchRect, Rect};
use crate::chart::PatchObservation;
use crate::color::{lab_to_xyz, ChannelCurve, DeviceRgb, GrayBalance, Lab, LinearRgb, Xyz, D50};
use crate::dataset::SampleRow;
use crate::error::{Error, Result};

/// Name of the pseudo-random stream recorded in emitted bundles.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Synthetic camera: XYZ → linear RGB matrix plus per-channel encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCameraModel {
    /// Rows map XYZ to linear R, G, B.
    pub matrix: [[f64; 3]; 3],
    /// Channel curves whose inverse encodes linear values to device counts.
    pub encode: GrayBalance,
    /// Additive Gaussian noise in device counts.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ForwardCameraModel {
    /// Validate invertibility (condition number below 1e4) and parameter
    /// ranges; curves are validated by construction.
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
        }
        let m = nalgebra::Matrix3::from_fn(|i, j| self.matrix[i][j]);
        let svd = m.svd(false, false);
        let (max, min) = (svd.singular_values.max(), svd.singular_values.min());
        if !(min > 0.0) || max / min >= 1e4 {
            return Err(Error::InvalidInput(format!(
                "camera matrix condition number {:.3e} too large",
                if min > 0.0 { max / min } else { f64::INFINITY }
            )));
        }
        Ok(())
    }

    /// Draw a random camera whose neutral axis is normalized: D50-chromaticity
    /// grays map to equal linear RGB channels equal to Y, so the encode curves
    /// are exactly the gray-balance ground truth. Gammas land in [1.8, 2.4].
    pub fn seeded(seed: u64, noise_sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA3E_11A5);
        let mut matrix = [[0.0f64; 3]; 3];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    rng.random_range(0.92..1.08)
                } else {
                    rng.random_range(-0.05..0.05)
                };
            }
            let along_neutral = row[0] * D50.xn / 100.0 + row[1] + row[2] * D50.zn / 100.0;
            for v in row.iter_mut() {
                *v /= along_neutral;
            }
        }
        let mut curve = || {
            let offset = rng.random_range(0.5..2.0);
            let gamma = rng.random_range(1.8..2.4);
            let gain = rng.random_range(96.0..120.0);
            ChannelCurve { gain, gamma, offset }
        };
        ForwardCameraModel {
            matrix,
            encode: GrayBalance { r: curve(), g: curve(), b: curve() },
            noise_sigma,
            seed,
        }
    }

    /// Fresh noise stream for this camera.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn linear_rgb(&self, xyz: Xyz) -> LinearRgb {
        let v = [xyz.x, xyz.y, xyz.z];
        let row = |r: &[f64; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
        LinearRgb::new(row(&self.matrix[0]), row(&self.matrix[1]), row(&self.matrix[2]))
    }

    /// Inverse of the linear stage.
    pub fn xyz_from_linear(&self, lin: LinearRgb) -> Result<Xyz> {
        let m = nalgebra::Matrix3::from_fn(|i, j| self.matrix[i][j]);
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("camera matrix is singular".into()))?;
        let v = inv * nalgebra::Vector3::new(lin.r, lin.g, lin.b);
        Ok(Xyz::new(v[0], v[1], v[2]))
    }
}

/// Render one patch color to device RGB.
///
/// Linear channels below the curve offset are out of gamut for the camera:
/// they clip to device zero and set the returned flag. Noise is drawn from
/// `rng` per channel in R, G, B order; the result clamps to [0, 255].
pub fn render_patch(xyz: Xyz, cam: &ForwardCameraModel, rng: &mut impl RngCore) -> (DeviceRgb, bool) {
    let lin = cam.linear_rgb(xyz);
    let mut clipped = false;
    let mut channel = |l: f64, c: &ChannelCurve| -> f64 {
        let v = if l < c.offset {
            clipped = true;
            0.0
        } else {
            255.0 * ((l - c.offset) / c.gain).powf(1.0 / c.gamma)
        };
        if v > 255.0 {
            clipped = true;
        }
        v.clamp(0.0, 255.0)
    };
    let mut dev = [
        channel(lin.r, &cam.encode.r),
        channel(lin.g, &cam.encode.g),
        channel(lin.b, &cam.encode.b),
    ];
    if cam.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cam.noise_sigma).expect("sigma validated");
        for v in dev.iter_mut() {
            *v = (*v + normal.sample(rng)).clamp(0.0, 255.0);
        }
    }
    (DeviceRgb::new(dev[0], dev[1], dev[2]), clipped)
}

/// Reference chart: a 12-step neutral ramp on patch ids 6..=17 (Y from 3 to
/// 95, D50 chromaticity) plus 23 chromatic points spanning skin-like and
/// saturated regions, on ids 1..=5 and 18..=35.
pub fn default_chart_references() -> Vec<(u32, Xyz)> {
    // Chromatic points, defined in Lab at D50. The first eight sample the
    // skin-tone region; the rest cover the saturated hue circle while staying
    // clear of the camera family's gamut floor.
    const CHROMATIC_LAB: [(f64, f64, f64); 23] = [
        (65.0, 18.0, 17.0),
        (55.0, 16.0, 15.0),
        (45.0, 14.0, 13.0),
        (70.0, 15.0, 18.0),
        (38.0, 12.0, 6.0),
        (60.0, 10.0, 20.0),
        (75.0, 12.0, 14.0),
        (50.0, 20.0, 22.0),
        (45.0, 45.0, 18.0),
        (60.0, 32.0, 30.0),
        (80.0, 5.0, 55.0),
        (70.0, -25.0, 45.0),
        (55.0, -35.0, 28.0),
        (60.0, -30.0, 5.0),
        (65.0, -25.0, -15.0),
        (40.0, 5.0, -35.0),
        (30.0, 10.0, -30.0),
        (40.0, 28.0, -28.0),
        (50.0, 45.0, -15.0),
        (70.0, 25.0, 5.0),
        (38.0, 18.0, 12.0),
        (50.0, -8.0, 30.0),
        (55.0, -5.0, -15.0),
    ];
    let mut refs = Vec::with_capacity(35);
    let mut chroma = CHROMATIC_LAB.iter();
    for id in 1..=5u32 {
        let &(l, a, b) = chroma.next().unwrap();
        refs.push((id, lab_to_xyz(Lab::new(l, a, b), D50)));
    }
    for k in 0..12u32 {
        let y = 3.0 + k as f64 * (95.0 - 3.0) / 11.0;
        refs.push((6 + k, Xyz::new(y * D50.xn / 100.0, y, y * D50.zn / 100.0)));
    }
    for id in 18..=35u32 {
        let &(l, a, b) = chroma.next().unwrap();
        refs.push((id, lab_to_xyz(Lab::new(l, a, b), D50)));
    }
    refs
}

const PATCH_SIZE: u32 = 24;
const PATCH_GAP: u32 = 4;
const GRID_COLS: u32 = 7;

/// A rendered synthetic chart: observations for library use plus the emitted
/// flat-patch image and its annotation.
#[derive(Debug, Clone)]
pub struct SynthChart {
    pub observations: Vec<PatchObservation>,
    /// Patch ids whose rendering clipped out of gamut.
    pub out_of_gamut: Vec<u32>,
    pub image: image::RgbImage,
    pub annotation: Annotation,
    pub references: Vec<(u32, Xyz)>,
}

/// Render a chart from reference values.
///
/// The neutral ramp (the annotation's gray ids, default 6..=17) must have
/// strictly increasing Y. Each patch is painted so that the mean over the
/// central half of its rectangle reproduces the rendered fractional device
/// value to within 1/(2·area) of a count.
pub fn synth_chart(references: &[(u32, Xyz)], cam: &ForwardCameraModel) -> Result<SynthChart> {
    cam.validate()?;
    let gray_ids: Vec<u32> = crate::annotation::default_gray_ids()
        .into_iter()
        .filter(|id| references.iter().any(|(rid, _)| rid == id))
        .collect();
    let gray_y: Vec<f64> = gray_ids
        .iter()
        .map(|id| references.iter().find(|(rid, _)| rid == id).unwrap().1.y)
        .collect();
    if gray_y.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("neutral ramp Y must be strictly increasing".into()));
    }

    let mut sorted: Vec<(u32, Xyz)> = references.to_vec();
    sorted.sort_unstable_by_key(|&(id, _)| id);

    let rows = (sorted.len() as u32).div_ceil(GRID_COLS);
    let width = PATCH_GAP + GRID_COLS * (PATCH_SIZE + PATCH_GAP);
    let height = PATCH_GAP + rows * (PATCH_SIZE + PATCH_GAP);
    let mut image = image::RgbImage::from_pixel(width, height, image::Rgb([0, 0, 0]));

    let mut rng = cam.rng();
    let mut observations = Vec::with_capacity(sorted.len());
    let mut out_of_gamut = Vec::new();
    let mut patches = Vec::with_capacity(sorted.len());
    for (pos, &(id, xyz)) in sorted.iter().enumerate() {
        let (dev, clipped) = render_patch(xyz, cam, &mut rng);
        if clipped {
            out_of_gamut.push(id);
        }
        let rect = Rect {
            x: PATCH_GAP + (pos as u32 % GRID_COLS) * (PATCH_SIZE + PATCH_GAP),
            y: PATCH_GAP + (pos as u32 / GRID_COLS) * (PATCH_SIZE + PATCH_GAP),
            w: PATCH_SIZE,
            h: PATCH_SIZE,
        };
        fill_patch(&mut image, rect, rect.center_half(), dev);
        observations.push(PatchObservation { patch_id: id, mean_rgb: dev, reference_xyz: xyz });
        patches.push(PatchRect { patch_id: Some(id), shade: None, role: None, rect });
    }

    Ok(SynthChart {
        observations,
        out_of_gamut,
        image,
        annotation: Annotation {
            image: "chart.png".into(),
            patches,
            gray_patch_ids: Some(gray_ids),
        },
        references: sorted,
    })
}

/// Paint a flat patch whose central-region mean equals `dev` almost exactly.
///
/// Border pixels round per channel; inside `inner`, the first
/// `round(frac · area)` pixels in row-major order carry the ceiling value and
/// the rest the floor, so the region mean lands within half a quantum of the
/// fractional target.
pub fn fill_patch(img: &mut image::RgbImage, rect: Rect, inner: Rect, dev: DeviceRgb) {
    let channels = [dev.r, dev.g, dev.b];
    let rounded: [u8; 3] = std::array::from_fn(|c| channels[c].round().clamp(0.0, 255.0) as u8);
    let floor: [u8; 3] = std::array::from_fn(|c| channels[c].floor().clamp(0.0, 255.0) as u8);
    let ceil: [u8; 3] = std::array::from_fn(|c| channels[c].ceil().clamp(0.0, 255.0) as u8);
    let area = (inner.w * inner.h) as f64;
    let k: [u64; 3] = std::array::from_fn(|c| {
        let frac = (channels[c].clamp(0.0, 255.0) - floor[c] as f64).clamp(0.0, 1.0);
        (frac * area).round() as u64
    });

    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            img.put_pixel(x, y, image::Rgb(rounded));
        }
    }
    let mut index = 0u64;
    for y in inner.y..inner.y + inner.h {
        for x in inner.x..inner.x + inner.w {
            let px: [u8; 3] = std::array::from_fn(|c| if index < k[c] { ceil[c] } else { floor[c] });
            img.put_pixel(x, y, image::Rgb(px));
            index += 1;
        }
    }
}

/// Render one flat sample image; returns the image and the rectangle whose
/// mean reproduces the rendered color.
pub fn render_flat_image(
    xyz: Xyz,
    cam: &ForwardCameraModel,
    rng: &mut impl RngCore,
    size: u32,
) -> (image::RgbImage, Rect, DeviceRgb) {
    let (dev, _) = render_patch(xyz, cam, rng);
    let mut img = image::RgbImage::new(size, size);
    let rect = Rect { x: 0, y: 0, w: size, h: size };
    let inner = rect.center_half();
    fill_patch(&mut img, rect, inner, dev);
    (img, inner, dev)
}

/// Affine mixing ground truth for the prediction dataset:
/// `target = weights · input + bias + N(0, sigma)` per output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingModel {
    pub weights: [[f64; 6]; 3],
    pub bias: [f64; 3],
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MixingModel {
    /// A plausible seeded mixing: with-foundation color sits between skin and
    /// swatch with a mild random tilt.
    pub fn seeded(seed: u64, noise_sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x717C_0DE5);
        let skin_share = rng.random_range(0.35..0.55);
        let mut weights = [[0.0f64; 6]; 3];
        for (d, row) in weights.iter_mut().enumerate() {
            row[d] = skin_share;
            row[d + 3] = 1.0 - skin_share;
            for v in row.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let bias = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        MixingModel { weights, bias, noise_sigma, seed }
    }

    /// Noise-free affine part.
    pub fn ideal(&self, input: &[f64; 6]) -> [f64; 3] {
        std::array::from_fn(|d| {
            self.bias[d] + (0..6).map(|k| self.weights[d][k] * input[k]).sum::<f64>()
        })
    }
}

/// A generated prediction dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub rows: Vec<SampleRow>,
    /// (subject_id, bare-skin Lab), ascending by subject.
    pub subject_skin: Vec<(String, Lab)>,
    /// (shade code, swatch Lab) for every shade that appears in the rows.
    pub shade_labs: Vec<(String, Lab)>,
    pub mixing: MixingModel,
}

/// Generate `n_rows` samples over `n_subjects` subjects and the given shade
/// palette. Each subject gets a contiguous run of shades; rows come out
/// sorted by `(subject_id, shade)`.
pub fn synth_prediction_dataset(
    n_subjects: usize,
    shades: &[String],
    n_rows: usize,
    mixing: &MixingModel,
    seed: u64,
) -> Result<SynthDataset> {
    if n_subjects == 0 || shades.is_empty() || n_rows == 0 {
        return Err(Error::InvalidInput("subjects, shades, and rows must be nonzero".into()));
    }
    let max_per_subject = shades.len();
    if n_rows > n_subjects * max_per_subject {
        return Err(Error::InvalidInput(format!(
            "{n_rows} rows need more than {n_subjects} subjects × {max_per_subject} shades"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let subject_skin: Vec<(String, Lab)> = (0..n_subjects)
        .map(|i| {
            let lab = Lab::new(
                rng.random_range(30.0..75.0),
                rng.random_range(6.0..22.0),
                rng.random_range(10.0..28.0),
            );
            (format!("s{:02}", i + 1), lab)
        })
        .collect();
    let all_shades: Vec<(String, Lab)> = shades
        .iter()
        .map(|code| {
            let lab = Lab::new(
                rng.random_range(30.0..75.0),
                rng.random_range(5.0..20.0),
                rng.random_range(8.0..30.0),
            );
            (code.clone(), lab)
        })
        .collect();

    // Spread rows as evenly as possible: the first (n_rows % n_subjects)
    // subjects test one extra shade.
    let base = n_rows / n_subjects;
    let extra = n_rows % n_subjects;
    let normal = Normal::new(0.0, mixing.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut rows = Vec::with_capacity(n_rows);
    let mut used_shades = std::collections::BTreeSet::new();
    for (i, (subject, skin)) in subject_skin.iter().enumerate() {
        let count = base + usize::from(i < extra);
        let start = rng.random_range(0..all_shades.len());
        for j in 0..count {
            let (code, fnd) = &all_shades[(start + j) % all_shades.len()];
            used_shades.insert(code.clone());
            let input = [skin.l, skin.a, skin.b, fnd.l, fnd.a, fnd.b];
            let mut target = mixing.ideal(&input);
            if mixing.noise_sigma > 0.0 {
                for t in target.iter_mut() {
                    *t += normal.sample(&mut rng);
                }
            }
            rows.push(SampleRow {
                subject_id: subject.clone(),
                shade: code.clone(),
                input,
                target,
            });
        }
    }
    rows.sort_by(|a, b| (&a.subject_id, &a.shade).cmp(&(&b.subject_id, &b.shade)));

    Ok(SynthDataset {
        rows,
        subject_skin,
        shade_labs: all_shades
            .into_iter()
            .filter(|(code, _)| used_shades.contains(code))
            .collect(),
        mixing: mixing.clone(),
    })
}

/// Default shade palette: five product families 100..=500, six codes each.
pub fn default_shade_codes() -> Vec<String> {
    let mut codes = Vec::new();
    for family in 1..=5u32 {
        for step in 0..6u32 {
            codes.push(format!("{}", family * 100 + step * 10));
        }
    }
    codes
}
