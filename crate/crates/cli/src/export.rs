//! Receptive-field images and natural-image conversion.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use v1snn::encoding::PATCH_SIDE;
use v1snn::images::GrayImage;
use v1snn::plasticity::Projection;
use v1snn::rf::on_minus_off;
use v1snn::{Error, Result};

/// Binary PGM (P5), 8-bit.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Maps `[-range, range]` linearly onto `[0, 255]`; zero is mid-gray.
fn to_gray(v: f64, range: f64) -> u8 {
    if range <= 0.0 {
        return 128;
    }
    (127.5 + 127.5 * (v / range).clamp(-1.0, 1.0)).round() as u8
}

const MONTAGE_COLS: usize = 18;

/// Writes `rf_NNN.pgm` per excitatory neuron, `montage.pgm` and `rf_scale.txt`
/// into `dir`. Returns the written paths.
pub fn export_receptive_fields(proj: &Projection, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n = proj.post_size;
    let side = PATCH_SIDE;
    let tile = side + 1;
    let rows = n.div_ceil(MONTAGE_COLS);
    let (mw, mh) = (MONTAGE_COLS * tile + 1, rows * tile + 1);
    let mut montage = vec![0u8; mw * mh];
    let mut sidecar = String::from(
        "Each image shows w_ON - w_OFF of one excitatory neuron as an 18x18 grid.\n\
         Gray levels map [-r, r] linearly onto [0, 255] (0 -> 127.5, rounded), with r the\n\
         neuron's own max |w_ON - w_OFF|; bright pixels prefer light input, dark pixels dark input.\n\
         montage.pgm tiles neurons row by row, 18 per row, separated by black 1-pixel lines.\n\n\
         neuron,r\n",
    );
    let mut written = Vec::with_capacity(n + 2);
    for j in 0..n {
        let d = on_minus_off(proj, j);
        let range = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let px: Vec<u8> = d.iter().map(|&v| to_gray(v, range)).collect();
        let path = dir.join(format!("rf_{j:03}.pgm"));
        fs::write(&path, pgm(side, side, &px))?;
        written.push(path);
        let (ty, tx) = (j / MONTAGE_COLS, j % MONTAGE_COLS);
        for r in 0..side {
            let at = (1 + ty * tile + r) * mw + 1 + tx * tile;
            montage[at..at + side].copy_from_slice(&px[r * side..(r + 1) * side]);
        }
        writeln!(sidecar, "{j},{range}").unwrap();
    }
    let montage_path = dir.join("montage.pgm");
    fs::write(&montage_path, pgm(mw, mh, &montage))?;
    written.push(montage_path);
    let side_path = dir.join("rf_scale.txt");
    fs::write(&side_path, sidecar)?;
    written.push(side_path);
    Ok(written)
}

/// Loads an image file as grayscale, crops the centered square and resizes it to `size`.
pub fn load_gray_square(path: &Path, size: u32) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::data(path, e.to_string()))?.to_luma32f();
    let (w, h) = img.dimensions();
    let side = w.min(h);
    if side < PATCH_SIDE as u32 {
        return Err(Error::data(path, format!("image is {w}x{h}, smaller than one patch")));
    }
    let cropped = image::imageops::crop_imm(&img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let resized = image::imageops::resize(&cropped, size, size, image::imageops::FilterType::Lanczos3);
    Ok(GrayImage {
        height: size as usize,
        width: size as usize,
        data: resized.into_raw(),
    })
}
