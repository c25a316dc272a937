//! Stimulus construction: natural-scene patch sampling, ON/OFF rate coding,
//! Poisson spike sampling, MNIST four-patch cutting and pixel erasement.

use rand::seq::index;
use rand::Rng;

use crate::images::WhitenedImageStore;
use crate::rng::{rng_from, SimRng, Stream};

pub const PATCH_SIDE: usize = 18;
pub const PATCH_PIXELS: usize = PATCH_SIDE * PATCH_SIDE;
/// ON channels followed by OFF channels.
pub const INPUT_UNITS: usize = 2 * PATCH_PIXELS;

pub const MNIST_SIDE: usize = 28;
pub const MNIST_PIXELS: usize = MNIST_SIDE * MNIST_SIDE;
/// Top-left corners (row, col) of the four digit patches, in feature order.
pub const MNIST_PATCH_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 10), (10, 0), (10, 10)];

/// Non-negative ON/OFF firing rates (Hz) for one 18×18 patch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusPatch {
    pub on: Vec<f64>,
    pub off: Vec<f64>,
}

impl StimulusPatch {
    pub fn silent() -> Self {
        Self {
            on: vec![0.0; PATCH_PIXELS],
            off: vec![0.0; PATCH_PIXELS],
        }
    }

    /// Rates in input-unit order: ON block then OFF block.
    pub fn rates(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(INPUT_UNITS);
        r.extend_from_slice(&self.on);
        r.extend_from_slice(&self.off);
        r
    }

    pub fn max_rate(&self) -> f64 {
        self.on.iter().chain(&self.off).fold(0.0, |m, &r| m.max(r))
    }
}

/// A raw signed window cut from the natural-image store.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedPatch {
    pub values: Vec<f64>,
    /// Absolute maximum of the whole source image.
    pub abs_max: f64,
    pub image_index: usize,
    pub row: usize,
    pub col: usize,
    /// Mirrored around the vertical axis (left-right).
    pub mirrored_lr: bool,
    /// Mirrored around the horizontal axis (up-down).
    pub mirrored_ud: bool,
}

/// Picks an image and an 18×18 window uniformly, then mirrors it around each
/// axis independently with probability `flip_p`.
///
/// Window placement draws from `patch_rng`; the two flip decisions always draw
/// from `flip_rng`, left-right first.
pub fn sample_patch(store: &WhitenedImageStore, patch_rng: &mut SimRng, flip_rng: &mut SimRng, flip_p: f64) -> SignedPatch {
    assert!(!store.is_empty(), "image store is empty");
    assert!(store.height >= PATCH_SIDE && store.width >= PATCH_SIDE);
    let image_index = patch_rng.random_range(0..store.len());
    let row = patch_rng.random_range(0..=store.height - PATCH_SIDE);
    let col = patch_rng.random_range(0..=store.width - PATCH_SIDE);
    let mirrored_lr = flip_rng.random::<f64>() < flip_p;
    let mirrored_ud = flip_rng.random::<f64>() < flip_p;

    let image = store.image(image_index);
    let mut values = Vec::with_capacity(PATCH_PIXELS);
    for r in 0..PATCH_SIDE {
        let src_r = row + if mirrored_ud { PATCH_SIDE - 1 - r } else { r };
        for c in 0..PATCH_SIDE {
            let src_c = col + if mirrored_lr { PATCH_SIDE - 1 - c } else { c };
            values.push(image[src_r * store.width + src_c] as f64);
        }
    }
    SignedPatch {
        values,
        abs_max: store.abs_max[image_index],
        image_index,
        row,
        col,
        mirrored_lr,
        mirrored_ud,
    }
}

/// Splits signed values into ON (positive) and OFF (negative) rates,
/// `|v| / abs_max * max_rate`.
pub fn encode(values: &[f64], abs_max: f64, max_rate: f64) -> StimulusPatch {
    assert!(abs_max > 0.0, "abs_max must be positive");
    let mut on = vec![0.0; values.len()];
    let mut off = vec![0.0; values.len()];
    for (k, &v) in values.iter().enumerate() {
        let rate = (v.abs() / abs_max * max_rate).min(max_rate);
        if v > 0.0 {
            on[k] = rate;
        } else if v < 0.0 {
            off[k] = rate;
        }
    }
    StimulusPatch { on, off }
}

/// Cuts the four overlapping 18×18 windows out of a 28×28 digit.
pub fn cut_four_patches(image: &[u8]) -> [Vec<u8>; 4] {
    assert_eq!(image.len(), MNIST_PIXELS, "expected a 28x28 image");
    MNIST_PATCH_OFFSETS.map(|(r0, c0)| {
        let mut patch = Vec::with_capacity(PATCH_PIXELS);
        for r in r0..r0 + PATCH_SIDE {
            patch.extend_from_slice(&image[r * MNIST_SIDE + c0..r * MNIST_SIDE + c0 + PATCH_SIDE]);
        }
        patch
    })
}

/// ON-only rates for a digit patch, normalized by the full digit's maximum.
pub fn encode_mnist_patch(patch: &[u8], digit_max: u8, max_rate: f64) -> StimulusPatch {
    let mut stim = StimulusPatch {
        on: vec![0.0; patch.len()],
        off: vec![0.0; patch.len()],
    };
    if digit_max > 0 {
        for (rate, &px) in stim.on.iter_mut().zip(patch) {
            *rate = px as f64 / digit_max as f64 * max_rate;
        }
    }
    stim
}

/// Draws one clock step of input spikes: unit `i` fires with probability
/// `rates[i] * dt / 1000`. Zero-rate units consume no random numbers.
pub fn sample_input_spikes<R: Rng + ?Sized>(rates: &[f64], dt_ms: f64, rng: &mut R, out: &mut [bool]) {
    let scale = dt_ms / 1000.0;
    for (spike, &rate) in out.iter_mut().zip(rates) {
        *spike = rate > 0.0 && rng.random::<f64>() < rate * scale;
    }
}

/// Number of pixels erased at `level` from a digit with `nonzero` lit pixels.
pub fn erased_count(nonzero: usize, level: f64) -> usize {
    (level * nonzero as f64).round() as usize
}

/// Level key used for seed derivation (per-mille, so 0.05 and 0.050000001 agree).
pub fn level_key(level: f64) -> u64 {
    (level * 1000.0).round() as u64
}

/// The stream that erases digit `image_index` at `level`.
pub fn erasement_rng(master_seed: u64, level: f64, image_index: usize) -> SimRng {
    rng_from(&[master_seed, Stream::Erase as u64, level_key(level), image_index as u64])
}

/// Zeroes `round(level * nonzero_count)` distinct nonzero pixels chosen
/// uniformly without replacement. Zero pixels are never touched.
pub fn erase_pixels<R: Rng + ?Sized>(image: &[u8], level: f64, rng: &mut R) -> Vec<u8> {
    assert!((0.0..1.0).contains(&level), "erasement level must lie in [0, 1)");
    let lit: Vec<usize> = image.iter().enumerate().filter_map(|(i, &p)| (p > 0).then_some(i)).collect();
    let k = erased_count(lit.len(), level);
    let mut out = image.to_vec();
    if k == 0 {
        return out;
    }
    for pick in index::sample(rng, lit.len(), k).into_iter() {
        out[lit[pick]] = 0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::images::WhitenedImageStore;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn encode_scales_and_routes_sign() {
        let s = encode(&[2.0, 0.0, -1.0, -2.0], 2.0, 125.0);
        assert_eq!(s.on, vec![125.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.off, vec![0.0, 0.0, 62.5, 125.0]);
    }

    #[test]
    fn mnist_patch_rates() {
        let s = encode_mnist_patch(&[255, 128, 0], 255, 125.0);
        assert_eq!(s.on[0], 125.0);
        assert!((s.on[1] - 62.745).abs() < 1e-3);
        assert_eq!(s.on[2], 0.0);
        assert!(s.off.iter().all(|&r| r == 0.0));
        let blank = encode_mnist_patch(&[0; PATCH_PIXELS], 0, 125.0);
        assert_eq!(blank, StimulusPatch::silent());
    }

    #[test]
    fn four_patch_geometry() {
        let image: Vec<u8> = (0..MNIST_PIXELS).map(|i| (i % 251) as u8 + 1).collect();
        let patches = cut_four_patches(&image);
        // Center block (rows/cols 10..18) shared by all four.
        for r in 10..18 {
            for c in 10..18 {
                let v = image[r * 28 + c];
                for (k, &(r0, c0)) in MNIST_PATCH_OFFSETS.iter().enumerate() {
                    assert_eq!(patches[k][(r - r0) * 18 + (c - c0)], v);
                }
            }
        }
        // First patch rows 0..10 equal image rows 0..10, cols 0..18.
        for r in 0..10 {
            assert_eq!(&patches[0][r * 18..r * 18 + 18], &image[r * 28..r * 28 + 18]);
        }
    }

    #[test]
    fn corner_pixel_belongs_to_first_patch_only() {
        let mut image = vec![0u8; MNIST_PIXELS];
        image[0] = 200;
        let patches = cut_four_patches(&image);
        assert_eq!(patches.iter().map(|p| p.iter().filter(|&&v| v > 0).count()).collect::<Vec<_>>(), vec![1, 0, 0, 0]);
    }

    fn toy_store() -> WhitenedImageStore {
        let (h, w) = (30, 40);
        let data: Vec<f32> = (0..h * w).map(|i| ((i * 37) % 101) as f32 - 50.0).collect();
        WhitenedImageStore::new(h, w, vec![data]).unwrap()
    }

    #[test]
    fn no_flip_returns_raw_window() {
        let store = toy_store();
        let mut prng = stream(3, Stream::Patch);
        let mut frng = stream(3, Stream::Flip);
        let p = sample_patch(&store, &mut prng, &mut frng, 0.0);
        assert!(!p.mirrored_lr && !p.mirrored_ud);
        let img = store.image(0);
        for r in 0..18 {
            for c in 0..18 {
                assert_eq!(p.values[r * 18 + c], img[(p.row + r) * 40 + p.col + c] as f64);
            }
        }
    }

    #[test]
    fn flips_mirror_the_window() {
        let store = toy_store();
        let mut prng = stream(5, Stream::Patch);
        let mut frng = stream(5, Stream::Flip);
        let p = sample_patch(&store, &mut prng, &mut frng, 1.0);
        assert!(p.mirrored_lr && p.mirrored_ud);
        let img = store.image(0);
        assert_eq!(p.values[0], img[(p.row + 17) * 40 + p.col + 17] as f64);
    }

    #[test]
    fn fixed_seed_gives_fixed_patch_sequence() {
        let store = toy_store();
        let run = || {
            let mut prng = stream(9, Stream::Patch);
            let mut frng = stream(9, Stream::Flip);
            (0..20).map(|_| sample_patch(&store, &mut prng, &mut frng, 0.5)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn flip_frequencies_are_binomial() {
        let store = toy_store();
        let mut prng = stream(11, Stream::Patch);
        let mut frng = stream(11, Stream::Flip);
        let n = 100_000;
        let (mut lr, mut ud) = (0usize, 0usize);
        for _ in 0..n {
            let p = sample_patch(&store, &mut prng, &mut frng, 0.5);
            lr += p.mirrored_lr as usize;
            ud += p.mirrored_ud as usize;
        }
        let sigma = (n as f64 * 0.25).sqrt();
        for count in [lr, ud] {
            assert!((count as f64 - n as f64 / 2.0).abs() < 3.0 * sigma, "{count}");
        }
    }

    #[test]
    fn erasement_counts_and_zero_preservation() {
        let mut image = vec![0u8; MNIST_PIXELS];
        for i in 0..150 {
            image[i * 5] = 10 + (i % 200) as u8;
        }
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(erase_pixels(&image, 0.0, &mut rng), image);
        let erased = erase_pixels(&image, 0.5, &mut rng);
        let zeroed = image.iter().zip(&erased).filter(|(a, b)| **a > 0 && **b == 0).count();
        assert_eq!(zeroed, 75);
        assert!(image.iter().zip(&erased).all(|(a, b)| *b == *a || *b == 0));
    }

    proptest! {
        #[test]
        fn erasement_contract(seed in any::<u64>(), lit in 0usize..400, level_step in 0usize..20) {
            let level = level_step as f64 * 0.05;
            let mut image = vec![0u8; MNIST_PIXELS];
            let mut rng = SimRng::seed_from_u64(seed);
            for &i in index::sample(&mut rng, MNIST_PIXELS, lit).iter().collect::<Vec<_>>().iter() {
                image[i] = rng.random_range(1..=255);
            }
            let a = erase_pixels(&image, level, &mut erasement_rng(seed, level, 3));
            let b = erase_pixels(&image, level, &mut erasement_rng(seed, level, 3));
            prop_assert_eq!(&a, &b);
            let zeroed = image.iter().zip(&a).filter(|(x, y)| **x > 0 && **y == 0).count();
            prop_assert_eq!(zeroed, erased_count(lit, level));
            prop_assert!(image.iter().zip(&a).all(|(x, y)| *x != 0 || *y == 0));
        }

        #[test]
        fn encoded_channels_are_disjoint_and_bounded(values in proptest::collection::vec(-5.0f64..5.0, 1..400)) {
            let abs_max = values.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            let s = encode(&values, abs_max, 125.0);
            for (a, b) in s.on.iter().zip(&s.off) {
                prop_assert_eq!(a * b, 0.0);
                prop_assert!(*a >= 0.0 && *a <= 125.0 && *b >= 0.0 && *b <= 125.0);
            }
        }
    }
}
