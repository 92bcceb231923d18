//! Two-dimensional embeddings of model representations: a learned
//! neighbor-preserving reducer, a PCA fallback, and unit-square scaling.

mod mlp;
mod reducer;

pub use mlp::{Adam, Dense, Mlp};
pub use reducer::{
    batch_affinities, fit_reducer, joint_affinities, Autoencoder, EpochLoss, LossParts, Reducer,
    ReducerConfig, MAX_EXACT_ROWS,
};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};
use std::io::Write;

use crate::error::{Error, Result};
use crate::scenegen::ImageId;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub coords: Array2<f64>,
    pub normalized: Array2<f64>,
    pub losses: Vec<EpochLoss>,
    pub seed: Option<u64>,
    /// Top two covariance eigenvalues, for PCA embeddings.
    pub explained_variance: Option<[f64; 2]>,
}

impl Embedding2D {
    /// Scatter export: `image_id,x,y,confidence` using the normalized coordinates.
    pub fn write_scatter<W: Write>(&self, w: W, ids: &[ImageId], confidences: &[f64]) -> Result<()> {
        let n = self.normalized.nrows();
        if ids.len() != n || confidences.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} points, {} ids, {} confidences",
                ids.len(),
                confidences.len()
            )));
        }
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["image_id", "x", "y", "confidence"])?;
        for i in 0..n {
            wr.write_record(&[
                ids[i].to_string(),
                self.normalized[[i, 0]].to_string(),
                self.normalized[[i, 1]].to_string(),
                confidences[i].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(())
    }
}

/// Per-column min-max scaling to [0, 1]; a constant column becomes 0.5.
pub fn normalize_unit_square(s: &Array2<f64>) -> Array2<f64> {
    let mut out = s.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            col.mapv_inplace(|v| (v - lo) / (hi - lo));
        } else {
            col.fill(0.5);
        }
    }
    out
}

/// Projection onto the top two principal axes, each axis signed so that its
/// largest-magnitude loading is positive.
pub fn reduce_pca2(g: &Array2<f64>) -> Result<Embedding2D> {
    let (n, d) = g.dim();
    if n < 2 {
        return Err(Error::Invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input entry".into()));
    }
    let mean = g.mean_axis(Axis(0)).unwrap();
    let centered = g - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = order.first().map_or(0.0, |&k| eig.eigenvalues[k]).max(0.0);
    let mut coords = Array2::<f64>::zeros((n, 2));
    let mut variance = [0.0; 2];
    for (c, &k) in order.iter().take(2).enumerate() {
        // numerically null directions carry only rounding noise
        if eig.eigenvalues[k] <= 1e-12 * top {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let pivot = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            coords[[r, c]] = sign * (0..d).map(|i| centered[[r, i]] * v[i]).sum::<f64>();
        }
        variance[c] = eig.eigenvalues[k].max(0.0);
    }
    Ok(Embedding2D {
        normalized: normalize_unit_square(&coords),
        coords,
        losses: Vec::new(),
        seed: None,
        explained_variance: Some(variance),
    })
}

#[cfg(test)]
mod tests;
