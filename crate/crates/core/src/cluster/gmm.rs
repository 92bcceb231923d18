//! Diagonal-covariance Gaussian mixtures fitted by EM.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub n_init: usize,
    pub max_iter: usize,
    /// Convergence threshold on the gain in mean per-sample log-likelihood.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            n_init: 5,
            max_iter: 200,
            tol: 1e-6,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub k: usize,
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    /// Total log-likelihood of the data under the final parameters.
    pub log_likelihood: f64,
    pub responsibilities: Array2<f64>,
    /// Total log-likelihood after every E-step of the selected restart.
    pub history: Vec<f64>,
    pub converged: bool,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn log_normal_diag(x: ndarray::ArrayView1<f64>, mean: ndarray::ArrayView1<f64>, var: ndarray::ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for d in 0..x.len() {
        let diff = x[d] - mean[d];
        s += LN_2PI + var[d].ln() + diff * diff / var[d];
    }
    -0.5 * s
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmFit {
    /// Per-sample log-likelihoods and normalized responsibilities.
    pub fn e_step(&self, x: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
        e_step(x, &self.weights, &self.means, &self.variances)
    }

    pub fn n_params(&self) -> usize {
        let d = self.means.ncols();
        (self.k - 1) + 2 * self.k * d
    }

    /// p ln n - 2 ln L.
    pub fn bic(&self, n: usize) -> f64 {
        self.n_params() as f64 * (n as f64).ln() - 2.0 * self.log_likelihood
    }

    /// Hard assignment by maximum responsibility (lowest index on ties).
    pub fn assignments(&self) -> Vec<usize> {
        self.responsibilities
            .rows()
            .into_iter()
            .map(|r| (0..r.len()).fold(0, |b, k| if r[k] > r[b] { k } else { b }))
            .collect()
    }
}

fn e_step(x: &Array2<f64>, w: &Array1<f64>, means: &Array2<f64>, vars: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = x.nrows();
    let k = w.len();
    let mut resp = Array2::<f64>::zeros((n, k));
    let mut ll = Vec::with_capacity(n);
    let mut buf = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            buf[c] = w[c].ln() + log_normal_diag(x.row(i), means.row(c), vars.row(c));
        }
        let lse = logsumexp(&buf);
        for c in 0..k {
            resp[[i, c]] = (buf[c] - lse).exp();
        }
        ll.push(lse);
    }
    (ll, resp)
}

fn column_variance(x: &Array2<f64>, floor: f64) -> Array1<f64> {
    x.var_axis(Axis(0), 0.0).mapv(|v| v.max(floor))
}

/// Weighted maximum-likelihood parameters from responsibilities. A component
/// with no mass is re-seeded at the worst-explained point.
fn m_step(
    x: &Array2<f64>,
    resp: &Array2<f64>,
    point_ll: Option<&[f64]>,
    fallback_means: &Array2<f64>,
    floor: f64,
) -> (Array1<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    let k = resp.ncols();
    let nk = resp.sum_axis(Axis(0));
    let global_var = column_variance(x, floor);
    let mut means = Array2::<f64>::zeros((k, d));
    let mut vars = Array2::<f64>::zeros((k, d));
    let mut weights = Array1::<f64>::zeros(k);
    let empty = 1e-12 * n as f64;
    for c in 0..k {
        if nk[c] <= empty {
            let anchor = match point_ll {
                Some(ll) => x.row((0..n).fold(0, |b, i| if ll[i] < ll[b] { i } else { b })).to_owned(),
                None => fallback_means.row(c).to_owned(),
            };
            means.row_mut(c).assign(&anchor);
            vars.row_mut(c).assign(&global_var);
            weights[c] = 1.0 / n as f64;
            continue;
        }
        for j in 0..d {
            let mut m = 0.0;
            for i in 0..n {
                m += resp[[i, c]] * x[[i, j]];
            }
            m /= nk[c];
            let mut v = 0.0;
            for i in 0..n {
                let diff = x[[i, j]] - m;
                v += resp[[i, c]] * diff * diff;
            }
            means[[c, j]] = m;
            vars[[c, j]] = (v / nk[c]).max(floor);
        }
        weights[c] = nk[c] / n as f64;
    }
    let s = weights.sum();
    weights /= s;
    (weights, means, vars)
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
pub fn kmeans_pp(x: &Array2<f64>, k: usize, r: &mut Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::<f64>::zeros((k, x.ncols()));
    let first = r.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let sq = |i: usize, c: ndarray::ArrayView1<f64>| -> f64 {
        x.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut d2: Vec<f64> = (0..n).map(|i| sq(i, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if u < v {
                    chosen = i;
                    break;
                }
                u -= v;
            }
            chosen
        } else {
            r.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(i, centers.row(c)));
        }
    }
    centers
}

fn fit_once(x: &Array2<f64>, k: usize, cfg: &GmmConfig, r: &mut Rng) -> Result<GmmFit> {
    let n = x.nrows();
    let centers = kmeans_pp(x, k, r);
    let mut hard = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let best = (0..k)
            .map(|c| {
                let d: f64 = x.row(i).iter().zip(centers.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
                (c, d)
            })
            .fold((0, f64::INFINITY), |b, (c, d)| if d < b.1 { (c, d) } else { b })
            .0;
        hard[[i, best]] = 1.0;
    }
    let (mut w, mut mu, mut var) = m_step(x, &hard, None, &centers, cfg.variance_floor);
    let mut history = Vec::new();
    let mut converged = false;
    let mut prev_mean = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iter {
        let (ll, resp) = e_step(x, &w, &mu, &var);
        let total: f64 = ll.iter().sum();
        if !total.is_finite() {
            return Err(Error::Numerical("mixture log-likelihood became non-finite".into()));
        }
        history.push(total);
        let mean = total / n as f64;
        if mean - prev_mean < cfg.tol {
            converged = true;
            break;
        }
        prev_mean = mean;
        (w, mu, var) = m_step(x, &resp, Some(&ll), &mu, cfg.variance_floor);
    }
    let (ll, resp) = e_step(x, &w, &mu, &var);
    let log_likelihood: f64 = ll.iter().sum();
    if history.last() != Some(&log_likelihood) {
        history.push(log_likelihood);
    }
    Ok(GmmFit {
        k,
        weights: w,
        means: mu,
        variances: var,
        log_likelihood,
        responsibilities: resp,
        history,
        converged,
    })
}

pub fn fit_gmm(x: &Array2<f64>, k: usize, seed: u64) -> Result<GmmFit> {
    fit_gmm_with(x, k, &GmmConfig::default(), seed)
}

/// Best of `cfg.n_init` restarts by final log-likelihood.
pub fn fit_gmm_with(x: &Array2<f64>, k: usize, cfg: &GmmConfig, seed: u64) -> Result<GmmFit> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(Error::Invalid(format!("cannot fit {k} components to {n} points")));
    }
    if cfg.n_init == 0 || cfg.max_iter == 0 || !(cfg.variance_floor > 0.0) {
        return Err(Error::Invalid("n_init, max_iter and the variance floor must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite feature".into()));
    }
    let mut best: Option<GmmFit> = None;
    for restart in 0..cfg.n_init {
        let mut r = rng::rng(rng::derive(seed, "gmm-init", (k * 1000 + restart) as u64));
        let fit = fit_once(x, k, cfg, &mut r)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicSelection {
    pub fit: GmmFit,
    /// `(K, BIC)` for every candidate.
    pub scores: Vec<(usize, f64)>,
}

/// Minimum-BIC fit over K in 1..=k_max (capped at n - 1); smaller K wins ties.
pub fn select_k_bic(x: &Array2<f64>, k_max: usize, cfg: &GmmConfig, seed: u64) -> Result<BicSelection> {
    let n = x.nrows();
    if n < 2 || k_max == 0 {
        return Err(Error::Invalid(format!("need at least 2 points and k_max >= 1 (n = {n})")));
    }
    let top = k_max.min(n - 1);
    let mut best: Option<(f64, GmmFit)> = None;
    let mut scores = Vec::with_capacity(top);
    for k in 1..=top {
        let fit = fit_gmm_with(x, k, cfg, seed)?;
        let bic = fit.bic(n);
        scores.push((k, bic));
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit));
        }
    }
    Ok(BicSelection {
        fit: best.unwrap().1,
        scores,
    })
}
