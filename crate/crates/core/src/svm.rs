//! L2-regularized, squared-hinge linear SVM solved in the dual by coordinate
//! descent with shrinking (Hsieh et al. 2008).
//!
//! Binary primal, with the bias carried as an extra feature of constant value
//! `B = intercept_scaling` (and therefore regularized):
//!
//! ```text
//! min_w  ½‖w‖² + C Σᵢ max(0, 1 − yᵢ wᵀxᵢ)²
//! ```

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng_from, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub intercept_scaling: f64,
    pub seed: u64,
}

/// A binary linear classifier `score(x) = w·x + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryModel {
    pub w: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
}

/// Primal objective of a binary model on `(x, y)`, `y ∈ {−1, +1}`.
pub fn primal_objective(model: &BinaryModel, x: &[f64], dim: usize, y: &[f64], params: &SvmParams) -> f64 {
    let b = model.bias / params.intercept_scaling;
    let mut obj = 0.5 * (model.w.iter().map(|v| v * v).sum::<f64>() + b * b);
    for (i, &yi) in y.iter().enumerate() {
        let score = dot(&model.w, &x[i * dim..(i + 1) * dim]) + model.bias;
        let slack = (1.0 - yi * score).max(0.0);
        obj += params.c * slack * slack;
    }
    obj
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Fits one binary problem. `x` is row-major with `dim` columns; `y ∈ {−1, +1}`.
/// `class` only labels the shuffling stream and the error.
pub fn fit_binary(x: &[f64], dim: usize, y: &[f64], params: &SvmParams, class: u8) -> Result<BinaryModel> {
    let n = y.len();
    if x.len() != n * dim {
        return Err(Error::Shape(format!("{} feature values for {n} rows of width {dim}", x.len())));
    }
    let bscale = params.intercept_scaling;
    let diag = 0.5 / params.c;
    let qd: Vec<f64> = (0..n).map(|i| dot(&x[i * dim..(i + 1) * dim], &x[i * dim..(i + 1) * dim]) + bscale * bscale + diag).collect();
    let mut w = vec![0.0; dim];
    let mut wb = 0.0;
    let mut alpha = vec![0.0; n];
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = rng_from(&[params.seed, Stream::Solver as u64, class as u64]);
    let mut pg_max_old = f64::INFINITY;
    let mut gap = f64::INFINITY;

    for epoch in 0..params.max_epochs {
        index[..active].shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let xi = &x[i * dim..(i + 1) * dim];
            let yi = y[i];
            let g = yi * (dot(&w, xi) + wb * bscale) - 1.0 + diag * alpha[i];
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(0.0);
                let step = (alpha[i] - old) * yi;
                for (wk, xk) in w.iter_mut().zip(xi) {
                    *wk += step * xk;
                }
                wb += step * bscale;
            }
            s += 1;
        }
        gap = pg_max - pg_min;
        if gap <= params.tol {
            if active == n {
                return Ok(BinaryModel {
                    w,
                    bias: wb * bscale,
                    epochs: epoch + 1,
                });
            }
            // Converged on the shrunk set: re-check everything.
            active = n;
            pg_max_old = f64::INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
    }
    Err(Error::NonConvergence {
        class,
        epochs: params.max_epochs,
        gap,
    })
}

/// One-vs-rest over classes `0..n_classes`. Returns one binary model per class.
pub fn fit_one_vs_rest(x: &[f64], dim: usize, labels: &[u8], n_classes: usize, params: &SvmParams) -> Result<Vec<BinaryModel>> {
    let present = (0..n_classes as u8).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::Invalid(format!("need at least two classes, found {present}")));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(Error::Invalid(format!("label {bad} outside 0..{n_classes}")));
    }
    (0..n_classes as u8)
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let m = fit_binary(x, dim, &y, params, c)?;
            log::debug!("class {c}: converged in {} epochs", m.epochs);
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(c: f64) -> SvmParams {
        SvmParams {
            c,
            tol: 1e-8,
            max_epochs: 100_000,
            intercept_scaling: 1.0,
            seed: 3,
        }
    }

    fn blobs(n: usize, dim: usize, shift: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let yi = if i % 2 == 0 { 1.0 } else { -1.0 };
            for _ in 0..dim {
                x.push(rng.random_range(-1.0..1.0) + yi * shift);
            }
            y.push(yi);
        }
        (x, y)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (x, y) = blobs(40, 3, 2.0, 1);
        let m = fit_binary(&x, 3, &y, &params(1.0), 0).unwrap();
        for i in 0..40 {
            assert!(y[i] * (dot(&m.w, &x[i * 3..i * 3 + 3]) + m.bias) > 0.0);
        }
    }

    #[test]
    fn duplicating_points_equals_doubling_c() {
        let (x, y) = blobs(30, 2, 0.3, 2);
        let once = fit_binary(&x, 2, &y, &params(1.0), 0).unwrap();
        let x2 = [x.clone(), x.clone()].concat();
        let y2 = [y.clone(), y.clone()].concat();
        let twice = fit_binary(&x2, 2, &y2, &params(0.5), 0).unwrap();
        for (a, b) in once.w.iter().zip(&twice.w) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((once.bias - twice.bias).abs() < 1e-6);
    }

    #[test]
    fn objective_decreases_from_zero() {
        let (x, y) = blobs(50, 4, 0.2, 3);
        let p = params(1.0);
        let m = fit_binary(&x, 4, &y, &p, 0).unwrap();
        let zero = BinaryModel {
            w: vec![0.0; 4],
            bias: 0.0,
            epochs: 0,
        };
        assert!(primal_objective(&m, &x, 4, &y, &p) < primal_objective(&zero, &x, 4, &y, &p));
    }

    #[test]
    fn epoch_cap_reports_non_convergence() {
        let (x, y) = blobs(50, 4, 0.0, 4);
        let mut p = params(10.0);
        p.max_epochs = 1;
        p.tol = 1e-12;
        let err = fit_binary(&x, 4, &y, &p, 6).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { class: 6, epochs: 1, gap } if gap > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = blobs(50, 4, 0.1, 5);
        let mut p = params(1.0);
        p.tol = 1e-3;
        assert_eq!(fit_binary(&x, 4, &y, &p, 1).unwrap(), fit_binary(&x, 4, &y, &p, 1).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(fit_one_vs_rest(&[0.0, 1.0], 1, &[3, 3], 10, &params(1.0)).is_err());
    }
}
