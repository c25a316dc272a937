//! Rate-coded activity vectors of the frozen network in response to MNIST digits.
//!
//! Each digit is cut into four 18×18 patches; every patch is presented `reps`
//! times from a resting network and the excitatory spike counts are averaged.
//! The four 324-long blocks are concatenated in patch order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{Decoder, Encoder};
use crate::encoding::{cut_four_patches, encode_mnist_patch, erase_pixels, erasement_rng};
use crate::error::{Error, Result};
use crate::mnist::MnistSet;
use crate::network::{present_frozen, Dynamics, Network, EXC_SIZE};
use crate::rng::{rng_from, Stream};

pub const FEATURE_DIM: usize = 4 * EXC_SIZE;
pub const FEATURE_MAGIC: &[u8; 8] = b"V1SNNFEA";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Test = 1,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split `{s}` (expected train or test)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Intact = 0,
    NoInhibition = 1,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Intact => "intact",
            Variant::NoInhibition => "no-inhibition",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "intact" => Ok(Variant::Intact),
            "no-inhibition" => Ok(Variant::NoInhibition),
            _ => Err(Error::Invalid(format!("unknown variant `{s}` (expected intact or no-inhibition)"))),
        }
    }

    /// The network a variant reads out from. Never modifies `net`.
    pub fn apply(self, net: &Network) -> Network {
        match self {
            Variant::Intact => net.clone(),
            Variant::NoInhibition => net.without_inhibition(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMeta {
    pub split: Split,
    pub variant: Variant,
    pub level: f64,
    pub reps: u32,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    /// Row-major, `labels.len() * dim` entries.
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
    pub meta: FeatureMeta,
}

impl FeatureMatrix {
    pub fn new(dim: usize, values: Vec<f64>, labels: Vec<u8>, meta: FeatureMeta) -> Result<Self> {
        if values.len() != labels.len() * dim {
            return Err(Error::Shape(format!("{} values for {} rows of width {dim}", values.len(), labels.len())));
        }
        Ok(Self { dim, values, labels, meta })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(FEATURE_MAGIC, FEATURE_VERSION);
        e.u8(self.meta.split as u8);
        e.u8(self.meta.variant as u8);
        e.f64(self.meta.level);
        e.u32(self.meta.reps);
        e.u64(self.meta.master_seed);
        e.u64(self.len() as u64);
        e.u64(self.dim as u64);
        e.bytes(&self.labels);
        e.f64s(&self.values);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut d = Decoder::open(bytes, path, FEATURE_MAGIC, "feature matrix", FEATURE_VERSION)?;
        let split = match d.u8()? {
            0 => Split::Train,
            1 => Split::Test,
            k => return Err(d.fail(format!("unknown split tag {k}"))),
        };
        let variant = match d.u8()? {
            0 => Variant::Intact,
            1 => Variant::NoInhibition,
            k => return Err(d.fail(format!("unknown variant tag {k}"))),
        };
        let level = d.f64()?;
        let reps = d.u32()?;
        let master_seed = d.u64()?;
        let n = d.u64()? as usize;
        let dim = d.u64()? as usize;
        let labels = d.bytes(n)?.to_vec();
        let values = d.f64s(n * dim)?;
        d.finish()?;
        let meta = FeatureMeta {
            split,
            variant,
            level,
            reps,
            master_seed,
        };
        Self::new(dim, values, labels, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }

    /// `label,f0,…,f{dim-1}` with a header row.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut header = String::from("label");
        for k in 0..self.dim {
            header.push_str(&format!(",f{k}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            let mut line = self.labels[i].to_string();
            for v in self.row(i) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Input-spike stream of one repetition of one patch of one digit. Level and
/// variant are deliberately not part of the seed, so every condition sees the
/// same input realization for the same digit.
pub fn extraction_rng(master_seed: u64, split: Split, digit_index: usize, patch_index: usize, rep: u32) -> crate::rng::SimRng {
    rng_from(&[master_seed, Stream::Extract as u64, split as u64, digit_index as u64, patch_index as u64, rep as u64])
}

/// The 1296-long mean excitatory spike-count vector for one 28×28 digit.
pub fn extract_activity(net: &Network, digit: &[u8], digit_index: usize, split: Split, reps: u32, master_seed: u64, presentation_ms: f64, max_rate_hz: f64) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    let digit_max = digit.iter().copied().max().unwrap_or(0);
    let mut out = vec![0.0; FEATURE_DIM];
    for (p, patch) in cut_four_patches(digit).iter().enumerate() {
        let stim = encode_mnist_patch(patch, digit_max, max_rate_hz);
        let block = &mut out[p * EXC_SIZE..(p + 1) * EXC_SIZE];
        for r in 0..reps {
            let mut rng = extraction_rng(master_seed, split, digit_index, p, r);
            let mut d = Dynamics::at_rest(&net.model);
            let counts = present_frozen(&net.model, &net.conn, &mut d, &stim, presentation_ms, &mut rng)?;
            for (acc, &c) in block.iter_mut().zip(&counts.exc) {
                *acc += c as f64;
            }
        }
        for v in block.iter_mut() {
            *v /= reps as f64;
        }
    }
    Ok(out)
}

pub struct ExtractRequest {
    pub split: Split,
    pub variant: Variant,
    pub level: f64,
    pub reps: u32,
    pub master_seed: u64,
    pub presentation_ms: f64,
    pub max_rate_hz: f64,
}

/// Features for every digit of `set`, erased at `req.level` (0 = originals).
/// Digits run in parallel; the result does not depend on the thread count.
pub fn extract_features(net: &Network, set: &MnistSet, req: &ExtractRequest) -> Result<FeatureMatrix> {
    if set.rows != 28 || set.cols != 28 {
        return Err(Error::Shape(format!("digits must be 28x28, got {}x{}", set.rows, set.cols)));
    }
    if !(0.0..1.0).contains(&req.level) {
        return Err(Error::Invalid(format!("erasement level {} outside [0, 1)", req.level)));
    }
    let readout_net = req.variant.apply(net);
    let rows: Vec<Vec<f64>> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let original = set.image(i);
            let digit = if req.level > 0.0 {
                erase_pixels(original, req.level, &mut erasement_rng(req.master_seed, req.level, i))
            } else {
                original.to_vec()
            };
            extract_activity(&readout_net, &digit, i, req.split, req.reps, req.master_seed, req.presentation_ms, req.max_rate_hz)
        })
        .collect::<Result<_>>()?;
    let meta = FeatureMeta {
        split: req.split,
        variant: req.variant,
        level: req.level,
        reps: req.reps,
        master_seed: req.master_seed,
    };
    FeatureMatrix::new(FEATURE_DIM, rows.concat(), set.labels.clone(), meta)
}
