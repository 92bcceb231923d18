//! PlaneSpot: 2D embedding + weighted confidence, Gaussian-mixture
//! clustering with BIC model selection, and error-ranked hypotheses.

mod gmm;

pub use gmm::{fit_gmm, fit_gmm_with, kmeans_pp, select_k_bic, BicSelection, GmmConfig, GmmFit};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::embed::{fit_reducer, normalize_unit_square, reduce_pca2, Embedding2D, ReducerConfig};
use crate::error::{Error, Result};
use crate::metrics::ImageSet;
use crate::models::ModelOutputs;
use crate::scenegen::ImageId;

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpotFeatures {
    /// `[x, y, w * confidence]` per image.
    pub r: Array2<f64>,
    pub w: f64,
}

/// Appends the weighted confidence as a third column of the normalized embedding.
pub fn build_features(sbar: &Array2<f64>, h: &[f64], w: f64) -> Result<PlaneSpotFeatures> {
    if sbar.ncols() != 2 || sbar.nrows() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "embedding is {}x{}, confidences {}",
            sbar.nrows(),
            sbar.ncols(),
            h.len()
        )));
    }
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Invalid(format!("weight {w} must be finite and non-negative")));
    }
    let mut r = Array2::<f64>::zeros((h.len(), 3));
    r.slice_mut(s![.., 0..2]).assign(sbar);
    for (i, &c) in h.iter().enumerate() {
        r[[i, 2]] = w * c;
    }
    Ok(PlaneSpotFeatures { r, w })
}

/// One hypothesized blindspot. `rank` starts at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub rank: usize,
    pub importance: f64,
    pub image_ids: Vec<ImageId>,
}

/// An importance-ordered hypothesis list; serializes as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypothesisList {
    pub hypotheses: Vec<Hypothesis>,
}

impl HypothesisList {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// The first `k` hypotheses.
    pub fn truncated(&self, k: usize) -> HypothesisList {
        HypothesisList {
            hypotheses: self.hypotheses.iter().take(k).cloned().collect(),
        }
    }

    pub fn image_sets(&self) -> Vec<ImageSet> {
        self.hypotheses
            .iter()
            .map(|h| h.image_ids.iter().copied().collect())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses an external list and checks it against the images it may refer
    /// to. Ranks must run 1..=n; importance must be non-increasing.
    pub fn from_json(text: &str, known: &BTreeSet<ImageId>) -> Result<Self> {
        let list: HypothesisList =
            serde_json::from_str(text).map_err(|e| Error::ImportFormat(e.to_string()))?;
        for (i, h) in list.hypotheses.iter().enumerate() {
            if h.rank != i + 1 {
                return Err(Error::ImportFormat(format!(
                    "entry {i} has rank {}, expected {}",
                    h.rank,
                    i + 1
                )));
            }
            if !h.importance.is_finite() {
                return Err(Error::ImportFormat(format!("rank {} has non-finite importance", h.rank)));
            }
            if i > 0 && h.importance > list.hypotheses[i - 1].importance {
                return Err(Error::ImportFormat(format!(
                    "rank {} is more important than rank {}",
                    h.rank,
                    h.rank - 1
                )));
            }
            if let Some(id) = h.image_ids.iter().find(|id| !known.contains(id)) {
                return Err(Error::ImportFormat(format!(
                    "rank {} refers to unknown image id {id}",
                    h.rank
                )));
            }
        }
        Ok(list)
    }
}

/// Error rate times error count for every non-empty cluster, highest first.
/// Ties keep cluster order.
pub fn rank_clusters(
    assignments: &[usize],
    k: usize,
    h: &[f64],
    ids: &[ImageId],
    error_threshold: f64,
) -> Result<HypothesisList> {
    if assignments.len() != h.len() || ids.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments, {} confidences, {} ids",
            assignments.len(),
            h.len(),
            ids.len()
        )));
    }
    let mut members: Vec<Vec<ImageId>> = vec![Vec::new(); k];
    let mut errors = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        if c >= k {
            return Err(Error::Invalid(format!("assignment {c} outside 0..{k}")));
        }
        members[c].push(ids[i]);
        if h[i] < error_threshold {
            errors[c] += 1;
        }
    }
    let mut scored: Vec<(f64, Vec<ImageId>)> = members
        .into_iter()
        .zip(errors)
        .filter(|(m, _)| !m.is_empty())
        .map(|(mut m, e)| {
            m.sort_unstable();
            let e = e as f64;
            (e / m.len() as f64 * e, m)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(HypothesisList {
        hypotheses: scored
            .into_iter()
            .enumerate()
            .map(|(i, (importance, image_ids))| Hypothesis {
                rank: i + 1,
                importance,
                image_ids,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    #[default]
    Learned,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneSpotConfig {
    pub reducer_kind: ReducerKind,
    pub reducer: ReducerConfig,
    /// Weight of the confidence column.
    pub w: f64,
    pub k_max: usize,
    pub gmm: GmmConfig,
    /// Images with confidence below this count as errors.
    pub error_threshold: f64,
    /// Hypotheses returned for scoring; the full list is always kept.
    pub k_return: usize,
    pub drop_zero_importance: bool,
}

impl Default for PlaneSpotConfig {
    fn default() -> Self {
        PlaneSpotConfig {
            reducer_kind: ReducerKind::Learned,
            reducer: ReducerConfig::default(),
            w: 0.025,
            k_max: 12,
            gmm: GmmConfig::default(),
            error_threshold: 0.5,
            k_return: 10,
            drop_zero_importance: false,
        }
    }
}

impl PlaneSpotConfig {
    pub fn validate(&self) -> Result<()> {
        self.reducer.validate()?;
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::Invalid(format!("w = {} must be finite and non-negative", self.w)));
        }
        if self.k_max == 0 || self.k_return == 0 {
            return Err(Error::Invalid("k_max and k_return must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.error_threshold) {
            return Err(Error::Invalid("error threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpotResult {
    pub embedding: Embedding2D,
    pub features: PlaneSpotFeatures,
    pub selection: BicSelection,
    /// Every non-empty cluster, ranked.
    pub hypotheses: HypothesisList,
    pub k_return: usize,
}

impl PlaneSpotResult {
    /// The capped list handed to scoring.
    pub fn returned(&self) -> HypothesisList {
        self.hypotheses.truncated(self.k_return)
    }
}

pub fn planespot(outputs: &ModelOutputs, cfg: &PlaneSpotConfig, seed: u64) -> Result<PlaneSpotResult> {
    cfg.validate()?;
    outputs.validate()?;
    let n = outputs.len();
    if n < 2 {
        return Err(Error::Invalid(format!("PlaneSpot needs at least 2 images, got {n}")));
    }
    let embedding = match cfg.reducer_kind {
        ReducerKind::Pca => reduce_pca2(&outputs.representations)?,
        ReducerKind::Learned => {
            let reducer = fit_reducer(&outputs.representations, &cfg.reducer, seed)?;
            reducer.embed(&outputs.representations)
        }
    };
    debug_assert_eq!(embedding.normalized, normalize_unit_square(&embedding.coords));
    let features = build_features(&embedding.normalized, &outputs.confidences, cfg.w)?;
    let selection = select_k_bic(&features.r, cfg.k_max, &cfg.gmm, seed)?;
    let mut hypotheses = rank_clusters(
        &selection.fit.assignments(),
        selection.fit.k,
        &outputs.confidences,
        &outputs.image_ids,
        cfg.error_threshold,
    )?;
    if cfg.drop_zero_importance {
        hypotheses.hypotheses.retain(|h| h.importance > 0.0);
    }
    Ok(PlaneSpotResult {
        embedding,
        features,
        selection,
        hypotheses,
        k_return: cfg.k_return,
    })
}
