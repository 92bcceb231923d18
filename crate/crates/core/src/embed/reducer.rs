//! Parametric neighbor embedding: an encoder trained on a t-SNE objective
//! jointly with a mirrored decoder's reconstruction error.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp};
use super::{normalize_unit_square, Embedding2D};
use crate::error::{Error, Result};
use crate::rng;

/// Inputs above this size must be subsampled by the caller (dense affinities).
pub const MAX_EXACT_ROWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducerConfig {
    pub perplexity: f64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub lambda_rec: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        ReducerConfig {
            perplexity: 30.0,
            hidden: vec![64, 32],
            lambda_rec: 1.0,
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
        }
    }
}

impl ReducerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity > 1.0) || !(self.lambda_rec >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Invalid(
                "perplexity must exceed 1, lambda_rec be non-negative, learning rate positive".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size < 2 || self.hidden.contains(&0) {
            return Err(Error::Invalid("epochs, batch size (>= 2) and widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub kl: f64,
    pub reconstruction: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub kl: f64,
    pub reconstruction: f64,
    pub total: f64,
}

/// Encoder and decoder trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    pub fn new(d: usize, hidden: &[usize], seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let encoder = Mlp::new(&sizes, &mut r);
        sizes.reverse();
        let decoder = Mlp::new(&sizes, &mut r);
        Autoencoder { encoder, decoder }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[off..off + p.len()]);
            off += p.len();
        }
    }

    /// Objective on one batch `x` whose joint affinities are `p` (zero
    /// diagonal, summing to one), with gradients for every parameter.
    pub fn loss_and_grad(&self, x: &Array2<f64>, p: &Array2<f64>, lambda_rec: f64) -> (LossParts, Autoencoder) {
        let enc = self.encoder.forward(x);
        let y = &enc.output;
        let (kl, mut grad_y) = kl_and_grad(y, p);

        let dec = self.decoder.forward(y);
        let diff = &dec.output - x;
        let count = diff.len() as f64;
        let reconstruction = diff.iter().map(|v| v * v).sum::<f64>() / count;
        let grad_xhat = diff.mapv(|v| lambda_rec * 2.0 * v / count);
        let (dec_grads, grad_from_dec) = self.decoder.backward(&dec, grad_xhat);
        grad_y += &grad_from_dec;
        let (enc_grads, _) = self.encoder.backward(&enc, grad_y);

        let parts = LossParts {
            kl,
            reconstruction,
            total: kl + lambda_rec * reconstruction,
        };
        (
            parts,
            Autoencoder {
                encoder: enc_grads,
                decoder: dec_grads,
            },
        )
    }

    pub fn loss(&self, x: &Array2<f64>, p: &Array2<f64>, lambda_rec: f64) -> LossParts {
        self.loss_and_grad(x, p, lambda_rec).0
    }
}

/// KL(P || Q) with Student-t affinities Q over the rows of `y`, and dKL/dy.
fn kl_and_grad(y: &Array2<f64>, p: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = y.nrows();
    let mut grad = Array2::<f64>::zeros(y.raw_dim());
    if n < 2 {
        return (0.0, grad);
    }
    let mut w = Array2::<f64>::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = (0..y.ncols()).map(|k| (y[[i, k]] - y[[j, k]]).powi(2)).sum();
                let wij = 1.0 / (1.0 + d2);
                w[[i, j]] = wij;
                z += wij;
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = w[[i, j]] / z;
            let pij = p[[i, j]];
            if pij > 0.0 {
                kl += pij * (pij / q).ln();
            }
            let coef = 4.0 * (pij - q) * w[[i, j]];
            for k in 0..y.ncols() {
                grad[[i, k]] += coef * (y[[i, k]] - y[[j, k]]);
            }
        }
    }
    (kl, grad)
}

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let gram = x.dot(&x.t());
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0)
        }
    })
}

/// Symmetrized joint affinities: each row's Gaussian bandwidth is tuned so
/// its conditional distribution has the requested perplexity.
pub fn joint_affinities(x: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let d2 = squared_distances(x);
    let target = perplexity.ln();
    let mut cond = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let row = d2.row(i);
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut probs = vec![0.0; n];
        for _ in 0..200 {
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i { 0.0 } else { (-beta * (row[j] - dmin)).exp() };
                sum += probs[j];
            }
            let mut entropy = 0.0;
            for (j, pj) in probs.iter_mut().enumerate() {
                *pj /= sum;
                if *pj > 0.0 {
                    entropy += beta * (row[j] - dmin) * *pj;
                }
            }
            // H = ln(sum) + beta * E[d - dmin], with probs already normalized
            entropy += sum.ln();
            let gap = entropy - target;
            if gap.abs() < 1e-6 {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        cond.row_mut(i).assign(&Array1::from(probs));
    }
    let joint = (&cond + &cond.t()) / (2.0 * n as f64);
    joint
}

/// The sub-block of `p` on `idx`, renormalized to sum to one.
pub fn batch_affinities(p: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut sub = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| {
        if a == b {
            0.0
        } else {
            p[[idx[a], idx[b]]]
        }
    });
    let s = sub.sum();
    if s > 0.0 {
        sub /= s;
    }
    sub
}

/// A fitted encoder with the input scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Reducer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub model: Autoencoder,
    pub losses: Vec<EpochLoss>,
    pub seed: u64,
}

impl Reducer {
    pub fn transform(&self, g: &Array2<f64>) -> Array2<f64> {
        let x = (g - &self.mean) / &self.scale;
        self.model.encoder.apply(&x)
    }

    pub fn embed(&self, g: &Array2<f64>) -> Embedding2D {
        let coords = self.transform(g);
        Embedding2D {
            normalized: normalize_unit_square(&coords),
            coords,
            losses: self.losses.clone(),
            seed: Some(self.seed),
            explained_variance: None,
        }
    }
}

fn check_input(g: &Array2<f64>) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input entry".into()));
    }
    let first = g.row(0);
    if g.rows().into_iter().all(|r| r == first) {
        return Err(Error::DegenerateInput("all input rows are identical".into()));
    }
    Ok(())
}

pub fn fit_reducer(g: &Array2<f64>, cfg: &ReducerConfig, seed: u64) -> Result<Reducer> {
    cfg.validate()?;
    let (n, d) = g.dim();
    if n < 10 {
        return Err(Error::Invalid(format!("reducer needs at least 10 rows, got {n}")));
    }
    if n > MAX_EXACT_ROWS {
        return Err(Error::Invalid(format!(
            "{n} rows exceed the exact-affinity limit of {MAX_EXACT_ROWS}; subsample first"
        )));
    }
    check_input(g)?;

    // centre, then one global scale so relative geometry is untouched
    let mean = g.mean_axis(Axis(0)).unwrap();
    let centered = g - &mean;
    let rms = (centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64).sqrt();
    let scale = Array1::from_elem(d, if rms > 1e-12 { rms } else { 1.0 });
    let x = centered / &scale;
    let p = joint_affinities(&x, cfg.perplexity.min(n as f64 / 4.0));

    let mut model = Autoencoder::new(d, &cfg.hidden, rng::derive(seed, "reducer-init", 0));
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::rng(rng::derive(seed, "reducer-shuffle", epoch as u64)));
        let (mut kl, mut rec, mut total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let pb = batch_affinities(&p, chunk);
            let (parts, grads) = model.loss_and_grad(&xb, &pb, cfg.lambda_rec);
            if !parts.total.is_finite() {
                return Err(Error::Numerical(format!("reducer loss became non-finite at epoch {epoch}")));
            }
            adam.step(model.params_mut(), grads.params());
            kl += parts.kl;
            rec += parts.reconstruction;
            total += parts.total;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        losses.push(EpochLoss {
            epoch,
            kl: kl / b,
            reconstruction: rec / b,
            total: total / b,
        });
    }
    Ok(Reducer {
        mean,
        scale,
        model,
        losses,
        seed,
    })
}
