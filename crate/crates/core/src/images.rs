//! Whitened natural-scene store and its on-disk format.
//!
//! The file format is a 16-byte little-endian header `{b"NIMG", count: u32,
//! height: u32, width: u32}` followed by `count * height * width` f32 pixels,
//! image-major then row-major.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const NIMG_MAGIC: &[u8; 4] = b"NIMG";

/// A grayscale image with f32 pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WhitenedImageStore {
    pub height: usize,
    pub width: usize,
    images: Vec<Vec<f32>>,
    /// Absolute maximum per image, used to normalize patch rates.
    pub abs_max: Vec<f64>,
}

impl WhitenedImageStore {
    pub fn new(height: usize, width: usize, images: Vec<Vec<f32>>) -> Result<Self> {
        let mut abs_max = Vec::with_capacity(images.len());
        for (k, img) in images.iter().enumerate() {
            if img.len() != height * width {
                return Err(Error::Shape(format!("image {k} has {} pixels, expected {}", img.len(), height * width)));
            }
            if img.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("image {k} contains non-finite pixels")));
            }
            let m = img.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
            if m <= 0.0 {
                return Err(Error::Invalid(format!("image {k} is all zero")));
            }
            abs_max.push(m);
        }
        Ok(Self {
            height,
            width,
            images,
            abs_max,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> &[f32] {
        &self.images[index]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.len() * self.height * self.width);
        out.extend_from_slice(NIMG_MAGIC);
        for v in [self.len(), self.height, self.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for img in &self.images {
            for &px in img {
                out.extend_from_slice(&px.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != NIMG_MAGIC {
            return Err(Error::data(path, "not a NIMG image store (bad magic)"));
        }
        let field = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let (count, height, width) = (field(0), field(1), field(2));
        let expected = 16 + 4 * count * height * width;
        if bytes.len() != expected {
            return Err(Error::data(path, format!("payload is {} bytes, header implies {expected}", bytes.len())));
        }
        let images = bytes[16..]
            .chunks_exact(4 * height * width)
            .map(|chunk| chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
            .collect();
        Self::new(height, width, images).map_err(|e| Error::data(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WhitenFilter {
    /// Pass images through untouched (for stores that are already whitened).
    Identity,
    /// Zero-mean, then multiply the spectrum by `f * exp(-(f / f0)^4)`,
    /// `f` in cycles per image.
    Olshausen { f0: f64 },
}

/// Whitens a set of equally sized grayscale images.
pub fn whiten(images: &[GrayImage], filter: WhitenFilter) -> Result<WhitenedImageStore> {
    let first = images.first().ok_or_else(|| Error::Invalid("no images to whiten".into()))?;
    let (h, w) = (first.height, first.width);
    let mut planner = FftPlanner::<f64>::new();
    let mut out = Vec::with_capacity(images.len());
    for (k, img) in images.iter().enumerate() {
        if img.height != h || img.width != w || img.data.len() != h * w {
            return Err(Error::Shape(format!("image {k} is {}x{}, expected {h}x{w}", img.height, img.width)));
        }
        let n = (h * w) as f64;
        let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = img.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Invalid(format!("image {k} is constant and cannot be whitened")));
        }
        match filter {
            WhitenFilter::Identity => out.push(img.data.clone()),
            WhitenFilter::Olshausen { f0 } => out.push(filter_image(&mut planner, img, mean, f0)),
        }
    }
    WhitenedImageStore::new(h, w, out)
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn filter_image(planner: &mut FftPlanner<f64>, img: &GrayImage, mean: f64, f0: f64) -> Vec<f32> {
    let (h, w) = (img.height, img.width);
    let mut buf: Vec<Complex<f64>> = img.data.iter().map(|&v| Complex::new(v as f64 - mean, 0.0)).collect();
    fft2(planner, &mut buf, h, w, false);
    for r in 0..h {
        let fy = signed_freq(r, h);
        for c in 0..w {
            let fx = signed_freq(c, w);
            let f = (fx * fx + fy * fy).sqrt();
            buf[r * w + c] *= f * (-(f / f0).powi(4)).exp();
        }
    }
    fft2(planner, &mut buf, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    let real: Vec<f64> = buf.iter().map(|z| z.re * scale).collect();
    let residual = real.iter().sum::<f64>() / real.len() as f64;
    real.iter().map(|&v| (v - residual) as f32).collect()
}

/// In-place 2-D FFT over a row-major `h x w` buffer (unnormalized).
pub fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
}
