//! Experiment orchestration: EC suite generation and persistence, model
//! building, discovery runs, sweeps, and report tables.

mod report;
mod run;
mod store;
mod sweep;

pub use report::{report, write_tables, ReportEntry, Table};
pub use run::{
    build_model, config_hash, parallel_map, prepare_inputs, run_ec, run_suite, Bdm, EcInputs,
    RunRecord, RunSettings, SuiteJob,
};
pub use store::{load_suite, save_suite, EcLock, SuiteStore};
pub use sweep::{select_best, sweep, SweepPoint, SweepResult, SweepRow};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::Range;

use crate::blindspots::{sample_blindspot_set, BlindspotRanges, BlindspotSet};
use crate::error::{Error, Result};
use crate::metrics::ImageSet;
use crate::models::{
    induce_labels, InductionReport, LabeledSplit, OracleConfig, SplitTag, TrainConfig,
    VerificationMode,
};
use crate::rng;
use crate::scenegen::{
    sample_dataset_spec_with, sample_scene, DatasetRanges, DatasetSpec, ImageId, RenderConfig,
};

/// Whole-EC redraws allowed when a blindspot set cannot be sampled.
pub const EC_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Trained,
    #[default]
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 4000,
            val: 1000,
            test: 2000,
        }
    }
}

impl SplitSizes {
    /// Image ids of a split: train, then val, then test, contiguous from 0.
    pub fn ids(&self, tag: SplitTag) -> Range<ImageId> {
        let (t, v, s) = (self.train as u64, self.val as u64, self.test as u64);
        match tag {
            SplitTag::Train => 0..t,
            SplitTag::Val => t..t + v,
            SplitTag::Test => t + v..t + v + s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcSeeds {
    pub dataset: u64,
    pub blindspots: u64,
    pub scenes: u64,
    pub training: u64,
    pub bdm: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub oracle: OracleConfig,
    pub train: TrainConfig,
    pub verification: VerificationMode,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kind: ModelKind::Oracle,
            oracle: OracleConfig::default(),
            train: TrainConfig::default(),
            verification: VerificationMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EcStatus {
    pub induction: Option<InductionReport>,
}

/// A (dataset, blindspot set, model) triple with every seed it depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfiguration {
    pub id: String,
    pub suite: String,
    pub index: usize,
    pub dataset: DatasetSpec,
    pub blindspots: BlindspotSet,
    pub sizes: SplitSizes,
    pub resolution: u32,
    pub seeds: EcSeeds,
    pub model: ModelSettings,
    #[serde(default)]
    pub status: EcStatus,
}

impl ExperimentConfiguration {
    pub fn render_config(&self) -> RenderConfig {
        RenderConfig::scaled(self.resolution)
    }

    /// Every blindspot passed induction verification.
    pub fn verified(&self) -> bool {
        self.status
            .induction
            .as_ref()
            .is_some_and(|r| r.verified.len() == self.blindspots.len() && r.all_verified())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.blindspots.validate(&self.dataset)?;
        if self.blindspots.is_empty() {
            return Err(Error::Invalid(format!("{}: empty blindspot set", self.id)));
        }
        if self.sizes.train == 0 || self.sizes.val == 0 || self.sizes.test == 0 {
            return Err(Error::Invalid(format!("{}: every split needs images", self.id)));
        }
        self.render_config().validate()?;
        if self.model.kind == ModelKind::Trained
            && self.model.train.arch.resolution != self.resolution as usize
        {
            return Err(Error::Invalid(format!(
                "{}: classifier expects {} px, scenes are {} px",
                self.id, self.model.train.arch.resolution, self.resolution
            )));
        }
        Ok(())
    }

    /// Samples the scenes of one split and labels them.
    pub fn split(&self, tag: SplitTag, render: bool) -> Result<LabeledSplit> {
        let cfg = self.render_config();
        let scenes = self
            .sizes
            .ids(tag)
            .map(|id| sample_scene(&self.dataset, id, rng::derive(self.seeds.scenes, "scene", id), &cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut split = induce_labels(tag, scenes, Vec::new(), &self.blindspots);
        if render {
            split.render_images(&cfg)?;
        }
        Ok(split)
    }

    pub fn data(&self, render: bool) -> Result<EcData> {
        Ok(EcData {
            train: self.split(SplitTag::Train, render)?,
            val: self.split(SplitTag::Val, render)?,
            test: self.split(SplitTag::Test, render)?,
        })
    }

    /// Per blindspot, the positive test images inside it: what a discovery
    /// method is scored against.
    pub fn truths(&self, test: &LabeledSplit) -> Vec<ImageSet> {
        self.blindspots
            .iter()
            .map(|b| {
                (0..test.len())
                    .filter(|&i| test.clean[i] && crate::blindspots::matches(b, &test.scenes[i]))
                    .map(|i| test.scenes[i].image_id)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcData {
    pub train: LabeledSplit,
    pub val: LabeledSplit,
    pub test: LabeledSplit,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteRanges {
    pub dataset: DatasetRanges,
    pub blindspots: BlindspotRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Also the EC id prefix; different names give disjoint seed streams.
    pub name: String,
    pub count: usize,
    pub ranges: SuiteRanges,
    pub sizes: SplitSizes,
    pub resolution: u32,
    pub model: ModelSettings,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            name: "eval".into(),
            count: 100,
            ranges: SuiteRanges::default(),
            sizes: SplitSizes::default(),
            resolution: 64,
            model: ModelSettings::default(),
        }
    }
}

impl SuiteConfig {
    /// The 20-EC tuning suite.
    pub fn tuning() -> Self {
        SuiteConfig {
            name: "tune".into(),
            count: 20,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Invalid(format!(
                "suite name {:?} must be non-empty ASCII alphanumeric",
                self.name
            )));
        }
        let b = &self.ranges.blindspots;
        if b.count.is_empty() || *b.count.start() == 0 || b.triplets.is_empty() || *b.triplets.start() == 0 {
            return Err(Error::Invalid("blindspot ranges must be non-empty and positive".into()));
        }
        let d = &self.ranges.dataset;
        if d.rollable.is_empty() || d.extra_object_layers.is_empty() {
            return Err(Error::Invalid("dataset ranges must be non-empty".into()));
        }
        Ok(())
    }
}

/// `count` ECs whose dataset, blindspot count and blindspot definitions are
/// drawn independently from per-EC seed streams. An EC whose blindspot set
/// cannot be satisfied is redrawn whole.
pub fn generate_ec_suite(cfg: &SuiteConfig, master_seed: u64) -> Result<Vec<ExperimentConfiguration>> {
    cfg.validate()?;
    let suite_seed = rng::derive(master_seed, &format!("suite/{}", cfg.name), 0);
    let mut ecs = Vec::with_capacity(cfg.count);
    for index in 0..cfg.count {
        let mut last_err = None;
        let mut made = None;
        for attempt in 0..EC_ATTEMPTS {
            let base = rng::derive(suite_seed, "ec", (index * EC_ATTEMPTS + attempt) as u64);
            let seeds = EcSeeds {
                dataset: rng::derive(base, "dataset", 0),
                blindspots: rng::derive(base, "blindspots", 0),
                scenes: rng::derive(base, "scenes", 0),
                training: rng::derive(base, "training", 0),
                bdm: rng::derive(base, "bdm", 0),
            };
            let dataset = match sample_dataset_spec_with(&cfg.ranges.dataset, seeds.dataset) {
                Ok(d) => d,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let m = rng::rng(rng::derive(base, "count", 0)).random_range(cfg.ranges.blindspots.count.clone());
            match sample_blindspot_set(&dataset, m, cfg.ranges.blindspots.triplets.clone(), seeds.blindspots) {
                Ok(blindspots) => {
                    made = Some((dataset, blindspots, seeds));
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some((dataset, blindspots, seeds)) = made else {
            return Err(last_err.unwrap());
        };
        let mut model = cfg.model.clone();
        model.train.arch.resolution = cfg.resolution as usize;
        let ec = ExperimentConfiguration {
            id: format!("{}-{index:03}", cfg.name),
            suite: cfg.name.clone(),
            index,
            dataset,
            blindspots,
            sizes: cfg.sizes,
            resolution: cfg.resolution,
            seeds,
            model,
            status: EcStatus::default(),
        };
        ec.validate()?;
        ecs.push(ec);
    }
    Ok(ecs)
}

/// Tuning and evaluation suites must share no EC id and no seed.
pub fn check_disjoint(a: &[ExperimentConfiguration], b: &[ExperimentConfiguration]) -> Result<()> {
    let ids: BTreeSet<&str> = a.iter().map(|e| e.id.as_str()).collect();
    let seeds: BTreeSet<u64> = a
        .iter()
        .flat_map(|e| [e.seeds.dataset, e.seeds.blindspots, e.seeds.scenes, e.seeds.training, e.seeds.bdm])
        .collect();
    for e in b {
        if ids.contains(e.id.as_str()) {
            return Err(Error::Invalid(format!("EC {} appears in both suites", e.id)));
        }
        if [e.seeds.dataset, e.seeds.blindspots, e.seeds.scenes, e.seeds.training, e.seeds.bdm]
            .iter()
            .any(|s| seeds.contains(s))
        {
            return Err(Error::Invalid(format!("EC {} shares a seed with the other suite", e.id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
