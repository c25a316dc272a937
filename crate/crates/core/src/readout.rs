//! Feature scaling, the one-vs-rest linear readout and its model file.

use std::fs;
use std::path::Path;

use crate::codec::{Decoder, Encoder};
use crate::config::ScalingMode;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::svm::{fit_one_vs_rest, SvmParams};

pub const N_CLASSES: usize = 10;
pub const MODEL_MAGIC: &[u8; 8] = b"V1SNNLIN";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Scaler {
    /// Per-feature min and max of the training matrix.
    PerFeature { min: Vec<f64>, max: Vec<f64> },
    /// Each vector is min-max scaled on its own; nothing is learned.
    PerVector { dim: usize },
}

impl Scaler {
    pub fn fit(train: &FeatureMatrix, mode: ScalingMode) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Invalid("cannot fit a scaler on an empty matrix".into()));
        }
        Ok(match mode {
            ScalingMode::PerVector => Scaler::PerVector { dim: train.dim },
            ScalingMode::PerFeature => {
                let mut min = train.row(0).to_vec();
                let mut max = min.clone();
                for i in 1..train.len() {
                    for (k, &v) in train.row(i).iter().enumerate() {
                        min[k] = min[k].min(v);
                        max[k] = max[k].max(v);
                    }
                }
                Scaler::PerFeature { min, max }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Scaler::PerFeature { min, .. } => min.len(),
            Scaler::PerVector { dim } => *dim,
        }
    }

    /// Maps one vector into [0, 1]. Constant features (or vectors) map to 0.
    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        match self {
            Scaler::PerFeature { min, max } => {
                for k in 0..row.len() {
                    let span = max[k] - min[k];
                    out[k] = if span > 0.0 { ((row[k] - min[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
                }
            }
            Scaler::PerVector { .. } => {
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = if span > 0.0 { (v - lo) / span } else { 0.0 };
                }
            }
        }
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.dim != self.dim() {
            return Err(Error::Shape(format!("features have {} columns, scaler expects {}", m.dim, self.dim())));
        }
        let mut out = vec![0.0; m.values.len()];
        for i in 0..m.len() {
            self.apply_row(m.row(i), &mut out[i * m.dim..(i + 1) * m.dim]);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub dim: usize,
    /// Class-major, `N_CLASSES * dim` weights.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub scaler: Scaler,
    pub params: SvmParams,
}

impl LinearModel {
    /// Fits scaler and classifier on level-0 training features.
    pub fn fit(train: &FeatureMatrix, mode: ScalingMode, params: SvmParams) -> Result<Self> {
        if train.meta.level != 0.0 {
            return Err(Error::Invalid(format!(
                "the readout is fitted on original digits only; these features were extracted at erasement level {}",
                train.meta.level
            )));
        }
        let scaler = Scaler::fit(train, mode)?;
        let x = scaler.apply(train)?;
        let models = fit_one_vs_rest(&x, train.dim, &train.labels, N_CLASSES, &params)?;
        Ok(Self {
            dim: train.dim,
            weights: models.iter().flat_map(|m| m.w.iter().copied()).collect(),
            biases: models.iter().map(|m| m.bias).collect(),
            scaler,
            params,
        })
    }

    pub fn scores(&self, scaled_row: &[f64]) -> [f64; N_CLASSES] {
        let mut s = [0.0; N_CLASSES];
        for (c, out) in s.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *out = w.iter().zip(scaled_row).map(|(a, b)| a * b).sum::<f64>() + self.biases[c];
        }
        s
    }

    /// Argmax class per row; ties go to the lowest class index.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<u8>> {
        let x = self.scaler.apply(m)?;
        Ok((0..m.len())
            .map(|i| {
                let s = self.scores(&x[i * self.dim..(i + 1) * self.dim]);
                let mut best = 0;
                for c in 1..N_CLASSES {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(MODEL_MAGIC, MODEL_VERSION);
        e.u64(self.dim as u64);
        e.u64(N_CLASSES as u64);
        e.f64(self.params.c);
        e.f64(self.params.tol);
        e.u64(self.params.max_epochs as u64);
        e.f64(self.params.intercept_scaling);
        e.u64(self.params.seed);
        match &self.scaler {
            Scaler::PerFeature { min, max } => {
                e.u8(0);
                e.f64s(min);
                e.f64s(max);
            }
            Scaler::PerVector { .. } => e.u8(1),
        }
        e.f64s(&self.weights);
        e.f64s(&self.biases);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut d = Decoder::open(bytes, path, MODEL_MAGIC, "model", MODEL_VERSION)?;
        let dim = d.u64()? as usize;
        if d.u64()? as usize != N_CLASSES {
            return Err(d.fail("unexpected class count"));
        }
        let params = SvmParams {
            c: d.f64()?,
            tol: d.f64()?,
            max_epochs: d.u64()? as usize,
            intercept_scaling: d.f64()?,
            seed: d.u64()?,
        };
        let scaler = match d.u8()? {
            0 => Scaler::PerFeature {
                min: d.f64s(dim)?,
                max: d.f64s(dim)?,
            },
            1 => Scaler::PerVector { dim },
            k => return Err(d.fail(format!("unknown scaler tag {k}"))),
        };
        let weights = d.f64s(N_CLASSES * dim)?;
        let biases = d.f64s(N_CLASSES)?;
        d.finish()?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::data(path, "non-finite model parameters"));
        }
        Ok(Self {
            dim,
            weights,
            biases,
            scaler,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(model: &LinearModel, test: &FeatureMatrix) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Invalid("accuracy of an empty test set is undefined".into()));
    }
    let pred = model.predict(test)?;
    let correct = pred.iter().zip(&test.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / test.len() as f64)
}
