//! Image container and the training-time augmentation chain.

use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};

/// Pixels stored row-major, channel-last (`(y·W + x)·C + c`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::data(format!(
                "image buffer has {} values, expected {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
    }

    /// Bytes scaled to `[0, 1]`.
    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(height, width, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[self.index(y, x, c)]
    }

    pub fn flatten(&self) -> Vector {
        Vector::from_vec(self.pixels.clone())
    }

    pub fn unflatten(v: &[f64], height: usize, width: usize, channels: usize) -> Result<Self> {
        Image::new(height, width, channels, v.to_vec())
    }
}

/// Zero border added on each side before cropping.
pub const CROP_PAD: usize = 4;

/// Zero-pads by `pad` on every side and cuts the original-size window whose
/// top-left corner sits at `(dy, dx)` in the padded image.
pub fn pad_and_crop_at(img: &Image, pad: usize, dy: usize, dx: usize) -> Image {
    assert!(dy <= 2 * pad && dx <= 2 * pad, "crop offset outside padded image");
    let mut out = Image::zeros(img.height, img.width, img.channels);
    for y in 0..img.height {
        let sy = y + dy;
        if sy < pad || sy >= pad + img.height {
            continue;
        }
        for x in 0..img.width {
            let sx = x + dx;
            if sx < pad || sx >= pad + img.width {
                continue;
            }
            for c in 0..img.channels {
                let v = img.get(sy - pad, sx - pad, c);
                let i = out.index(y, x, c);
                out.pixels[i] = v;
            }
        }
    }
    out
}

/// [`pad_and_crop_at`] with both offsets uniform over `0..=2·CROP_PAD`.
pub fn pad_and_random_crop(img: &Image, rng: &mut Rng) -> Image {
    let span = 2 * CROP_PAD + 1;
    let dy = rng.below(span);
    let dx = rng.below(span);
    pad_and_crop_at(img, CROP_PAD, dy, dx)
}

/// Factors for one jitter application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Fraction of the hue circle.
    pub hue_shift: f64,
}

impl JitterFactors {
    pub const IDENTITY: JitterFactors = JitterFactors {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue_shift: 0.0,
    };

    /// Brightness, contrast and saturation in `[0.9, 1.1]`, hue in `±0.05`.
    pub fn draw(rng: &mut Rng) -> Self {
        JitterFactors {
            brightness: rng.uniform_in(0.9, 1.1),
            contrast: rng.uniform_in(0.9, 1.1),
            saturation: rng.uniform_in(0.9, 1.1),
            hue_shift: rng.uniform_in(-0.05, 0.05),
        }
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i64).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Brightness, contrast, saturation then hue, each clamped to `[0, 1]`.
pub fn color_jitter_with(img: &Image, f: JitterFactors) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::data("color jitter needs an RGB image"));
    }
    let n = img.height * img.width;
    let mut px = img.pixels.clone();
    let clamp = |v: f64| v.clamp(0.0, 1.0);

    if f.brightness != 1.0 {
        for v in px.iter_mut() {
            *v = clamp(*v * f.brightness);
        }
    }
    if f.contrast != 1.0 {
        let mean = px.chunks(3).map(|p| luma(p[0], p[1], p[2])).sum::<f64>() / n as f64;
        for v in px.iter_mut() {
            *v = clamp(mean + (*v - mean) * f.contrast);
        }
    }
    if f.saturation != 1.0 {
        for p in px.chunks_mut(3) {
            let l = luma(p[0], p[1], p[2]);
            for v in p.iter_mut() {
                *v = clamp(l + (*v - l) * f.saturation);
            }
        }
    }
    if f.hue_shift != 0.0 {
        for p in px.chunks_mut(3) {
            let (h, s, v) = rgb_to_hsv(p[0], p[1], p[2]);
            if s == 0.0 {
                continue;
            }
            let (r, g, b) = hsv_to_rgb(h + f.hue_shift, s, v);
            p[0] = clamp(r);
            p[1] = clamp(g);
            p[2] = clamp(b);
        }
    }
    Image::new(img.height, img.width, 3, px)
}

pub fn color_jitter(img: &Image, rng: &mut Rng) -> Result<Image> {
    color_jitter_with(img, JitterFactors::draw(rng))
}

pub const NOISE_STD: f64 = 0.005;

/// Adds `N(0, std²)` per pixel, then clamps to `[0, 1]`.
pub fn add_gaussian_noise_std(img: &Image, std: f64, rng: &mut Rng) -> Image {
    let mut out = img.clone();
    if std == 0.0 {
        return out;
    }
    for v in out.pixels.iter_mut() {
        *v = (*v + std * rng.standard_normal()).clamp(0.0, 1.0);
    }
    out
}

pub fn add_gaussian_noise(img: &Image, rng: &mut Rng) -> Image {
    add_gaussian_noise_std(img, NOISE_STD, rng)
}

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel zero mean and unit variance (population std, floored at
/// [`STD_FLOOR`]), flattened channel-last.
pub fn normalize_per_image(img: &Image) -> Vector {
    let n = (img.height * img.width) as f64;
    let c = img.channels;
    let mut out = img.pixels.clone();
    for ch in 0..c {
        let mean = img.pixels.iter().skip(ch).step_by(c).sum::<f64>() / n;
        let var = img.pixels.iter().skip(ch).step_by(c).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(STD_FLOOR);
        for v in out.iter_mut().skip(ch).step_by(c) {
            *v = (*v - mean) / std;
        }
    }
    Vector::from_vec(out)
}

/// Training-time pipeline: crop, jitter (RGB only), noise, normalize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augment {
    pub crop: bool,
    pub jitter: bool,
    pub noise_std: f64,
}

impl Augment {
    pub const OFF: Augment = Augment {
        crop: false,
        jitter: false,
        noise_std: 0.0,
    };
    pub const FULL: Augment = Augment {
        crop: true,
        jitter: true,
        noise_std: NOISE_STD,
    };

    pub fn apply(&self, img: &Image, rng: &mut Rng) -> Result<Vector> {
        let mut cur = img.clone();
        if self.crop {
            cur = pad_and_random_crop(&cur, rng);
        }
        if self.jitter && cur.channels == 3 {
            cur = color_jitter(&cur, rng)?;
        }
        if self.noise_std > 0.0 {
            cur = add_gaussian_noise_std(&cur, self.noise_std, rng);
        }
        Ok(normalize_per_image(&cur))
    }
}
