//! Rule-based skin-pixel detection over RGB, hue, and CbCr jointly.
//!
//! A pixel is skin when it passes three criteria at once: bounds and channel
//! ordering in RGB, a five-line polygon in the CbCr plane, and a hue window.
//! The mask is a pure pixelwise map with no morphological cleanup; downstream
//! consumers average over the mask, so stray pixels wash out.

use std::io::BufWriter;
use std::path::Path;

use crate::color::DeviceRgb;
use crate::error::{Error, Result};

/// Per-pixel chroma/hue coordinates used by the skin rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelColorSpaces {
    pub rgb: DeviceRgb,
    /// Hue in degrees, [0, 360).
    pub h: f64,
    /// BT.601 full-range chroma, 128-centered on [0, 255].
    pub cb: f64,
    pub cr: f64,
}

impl PixelColorSpaces {
    pub fn from_rgb(rgb: DeviceRgb) -> Self {
        let (r, g, b) = (rgb.r, rgb.g, rgb.b);
        let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
        let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
        Self { rgb, h: hue_degrees(r, g, b), cb, cr }
    }
}

// Hexagonal HSV hue on [0, 360). Achromatic pixels get hue 0.
fn hue_degrees(r: f64, g: f64, b: f64) -> f64 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        60.0 * (g - b) / delta
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Classify one pixel with the three-criteria rule set.
///
/// The hue thresholds are interpreted on the 0–360 degree scale; see
/// [`PixelColorSpaces`] for the chroma convention.
pub fn is_skin_pixel(p: DeviceRgb) -> bool {
    let (r, g, b) = (p.r, p.g, p.b);

    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let criterion1 = r > 95.0
        && g > 40.0
        && b > 20.0
        && max - min > 15.0
        && (r - g).abs() > 15.0
        && r > g
        && r > b;
    if !criterion1 {
        return false;
    }

    let cs = PixelColorSpaces::from_rgb(p);
    let (cb, cr) = (cs.cb, cs.cr);
    let criterion2 = cr <= 1.5862 * cb + 20.0
        && cr >= 0.3448 * cb + 76.2069
        && cr >= -4.5652 * cb + 234.5652
        && cr <= -1.15 * cb + 301.75
        && cr <= -2.2857 * cb + 432.85;
    if !criterion2 {
        return false;
    }

    cs.h < 25.0 || cs.h > 230.0
}

/// Binary skin mask over an image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    pixel_count: usize,
}

impl SkinMask {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of true (skin) entries.
    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    /// Row-major iterator over (x, y) of the true entries.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Write the mask as a 1-bit grayscale PNG (skin = white).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::parse(path, None, format!("png encode: {e}")))?;

        // Pack rows MSB-first, one row per scanline.
        let row_bytes = (self.width as usize).div_ceil(8);
        let mut data = vec![0u8; row_bytes * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.bits[y * self.width as usize + x] {
                    data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer
            .write_image_data(&data)
            .map_err(|e| Error::parse(path, None, format!("png encode: {e}")))?;
        Ok(())
    }
}

/// Build the skin mask of an 8-bit RGB image: `mask[x, y] = is_skin_pixel(img[x, y])`.
pub fn skin_mask(img: &image::RgbImage) -> Result<SkinMask> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let mut bits = Vec::with_capacity((img.width() * img.height()) as usize);
    let mut pixel_count = 0;
    for p in img.pixels() {
        let skin = is_skin_pixel(DeviceRgb::from_u8(p.0[0], p.0[1], p.0[2]));
        pixel_count += skin as usize;
        bits.push(skin);
    }
    Ok(SkinMask {
        width: img.width(),
        height: img.height(),
        bits,
        pixel_count,
    })
}

/// Per-channel arithmetic mean of the masked pixels.
pub fn mask_mean_rgb(img: &image::RgbImage, mask: &SkinMask) -> Result<DeviceRgb> {
    if mask.width != img.width() || mask.height != img.height() {
        return Err(Error::InvalidInput(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width,
            mask.height,
            img.width(),
            img.height()
        )));
    }
    if mask.pixel_count == 0 {
        return Err(Error::EmptyRegion("no skin detected".into()));
    }
    let mut sum = [0.0f64; 3];
    for (x, y) in mask.iter_set() {
        let p = img.get_pixel(x, y);
        sum[0] += p.0[0] as f64;
        sum[1] += p.0[1] as f64;
        sum[2] += p.0[2] as f64;
    }
    let n = mask.pixel_count as f64;
    Ok(DeviceRgb::new(sum[0] / n, sum[1] / n, sum[2] / n))
}
