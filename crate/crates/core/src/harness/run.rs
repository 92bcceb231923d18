use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{EcData, ExperimentConfiguration, ModelKind, SuiteStore};
use crate::cluster::{planespot, HypothesisList, PlaneSpotConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, failure_breakdown, ImageSet, MetricReport, MetricThresholds, TruthFailure};
use crate::models::{
    oracle_model, train_classifier, verify_induction, InductionReport, LabeledSplit, Model,
    ModelOutputs, TrainedModel,
};
use crate::scenegen::ImageId;

/// A discovery method: PlaneSpot, or a hypothesis list produced elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Bdm {
    PlaneSpot(PlaneSpotConfig),
    Imported { name: String, hypotheses: HypothesisList },
}

impl Bdm {
    pub fn name(&self) -> String {
        match self {
            Bdm::PlaneSpot(_) => "planespot".into(),
            Bdm::Imported { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub thresholds: MetricThresholds,
    /// Hypotheses scored per EC; the full list is persisted regardless.
    pub k_return: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            thresholds: MetricThresholds::synthetic(),
            k_return: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub ec_id: String,
    pub bdm: String,
    pub config_hash: String,
    pub bdm_seed: u64,
    /// Length of the untruncated hypothesis list.
    pub n_hypotheses: usize,
    pub hypotheses_file: Option<String>,
    pub report: MetricReport,
    /// Failure categories of the full, untruncated list.
    pub untruncated_failures: Vec<TruthFailure>,
    pub duration_secs: f64,
}

/// First 16 hex digits of the SHA-256 of the method, its configuration and
/// the scoring settings.
pub fn config_hash(bdm: &Bdm, settings: &RunSettings) -> Result<String> {
    let bytes = serde_json::to_vec(&(bdm, settings))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// What a discovery method sees for one EC (positive test images only) and
/// what it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct EcInputs {
    pub ec_id: String,
    pub outputs: ModelOutputs,
    pub truths: Vec<ImageSet>,
}

impl EcInputs {
    pub fn known_ids(&self) -> BTreeSet<ImageId> {
        self.outputs.image_ids.iter().copied().collect()
    }
}

pub fn prepare_inputs(ec: &ExperimentConfiguration, model: &dyn Model, test: &LabeledSplit) -> Result<EcInputs> {
    let truths = ec.truths(test);
    if let Some(b) = truths.iter().position(|t| t.is_empty()) {
        return Err(Error::UnverifiedEc(format!(
            "{}: blindspot {b} has no positive test image",
            ec.id
        )));
    }
    let outputs = model.infer(test, &test.positives())?;
    Ok(EcInputs {
        ec_id: ec.id.clone(),
        outputs,
        truths,
    })
}

/// Builds (or, for trained ECs with a stored model, reloads) the EC's model
/// and checks its induction on the validation split.
pub fn build_model(
    ec: &ExperimentConfiguration,
    data: &EcData,
    store: Option<&SuiteStore>,
) -> Result<(Box<dyn Model>, InductionReport)> {
    let model: Box<dyn Model> = match ec.model.kind {
        ModelKind::Oracle => Box::new(oracle_model(
            &ec.dataset,
            &ec.blindspots,
            ec.model.oracle,
            ec.seeds.training,
        )?),
        ModelKind::Trained => {
            let stored = store.map(|s| s.model_path(&ec.id)).filter(|p| p.exists());
            let m = match stored {
                Some(p) => TrainedModel::load(&p)?,
                None => {
                    let m = train_classifier(&data.train, &data.val, &ec.model.train, ec.seeds.training)?;
                    if let Some(s) = store {
                        m.save(&s.model_path(&ec.id))?;
                    }
                    m
                }
            };
            Box::new(m)
        }
    };
    let report = verify_induction(model.as_ref(), &data.val, &ec.blindspots, ec.model.verification)?;
    Ok((model, report))
}

/// Runs one discovery method on a verified EC and scores it. With a store,
/// the hypotheses, model outputs, scatter data and record are persisted.
pub fn run_ec(
    ec: &ExperimentConfiguration,
    inputs: &EcInputs,
    bdm: &Bdm,
    settings: &RunSettings,
    store: Option<&SuiteStore>,
) -> Result<RunRecord> {
    if !ec.verified() {
        return Err(Error::UnverifiedEc(format!("{}: induction not verified", ec.id)));
    }
    settings.thresholds.validate()?;
    let start = Instant::now();
    let hash = config_hash(bdm, settings)?;
    let (full, embedding) = match bdm {
        Bdm::PlaneSpot(cfg) => {
            let res = planespot(&inputs.outputs, cfg, ec.seeds.bdm)?;
            (res.hypotheses, Some(res.embedding))
        }
        Bdm::Imported { hypotheses, .. } => {
            let text = hypotheses.to_json()?;
            (HypothesisList::from_json(&text, &inputs.known_ids())?, None)
        }
    };
    let scored = full.truncated(settings.k_return).image_sets();
    let report = evaluate(&scored, &inputs.truths, &settings.thresholds)?;
    let untruncated_failures = failure_breakdown(&full.image_sets(), &inputs.truths, &settings.thresholds)?;

    let (run_id, hypotheses_file) = match store {
        Some(s) => {
            let stem = s.next_run_stem(&ec.id, &hash)?;
            let dir = s.runs_dir(&ec.id);
            let hyp_name = format!("{stem}.hypotheses.json");
            let path = dir.join(&hyp_name);
            std::fs::write(&path, full.to_json()?).map_err(|e| Error::io(&path, e))?;
            inputs.outputs.save_csv(&dir.join(format!("{stem}.outputs.csv")))?;
            if let Some(emb) = &embedding {
                let path = dir.join(format!("{stem}.scatter.csv"));
                let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                emb.write_scatter(f, &inputs.outputs.image_ids, &inputs.outputs.confidences)?;
            }
            (stem, Some(hyp_name))
        }
        None => (hash.clone(), None),
    };
    let record = RunRecord {
        run_id,
        ec_id: ec.id.clone(),
        bdm: bdm.name(),
        config_hash: hash,
        bdm_seed: ec.seeds.bdm,
        n_hypotheses: full.len(),
        hypotheses_file,
        report,
        untruncated_failures,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(s) = store {
        s.write_record(&record)?;
    }
    Ok(record)
}

/// Applies `f` to every item on `threads` workers; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
}

/// The outcome of one EC in a suite run.
#[derive(Debug)]
pub struct SuiteJob {
    /// The EC with its induction status filled in.
    pub ec: ExperimentConfiguration,
    /// `Ok(None)` when the EC failed verification and was excluded.
    pub record: Result<Option<RunRecord>>,
}

/// Builds every EC's model, drops unverified ECs, and runs `bdm` on the rest.
/// With a store, an EC that already holds a record for this configuration is
/// not re-run unless `rerun` is set.
pub fn run_suite(
    ecs: &[ExperimentConfiguration],
    bdm: &Bdm,
    settings: &RunSettings,
    store: Option<&SuiteStore>,
    threads: usize,
    rerun: bool,
) -> Vec<SuiteJob> {
    let hash = config_hash(bdm, settings);
    parallel_map(ecs, threads, |ec| {
        let mut ec = ec.clone();
        let record = (|| -> Result<Option<RunRecord>> {
            let hash = hash.as_ref().map_err(|e| Error::Serde(e.to_string()))?;
            let _lock = store.map(|s| s.lock(&ec.id)).transpose()?;
            if let (Some(s), false) = (store, rerun) {
                if let Some(prev) = s.run_records(&ec.id)?.into_iter().find(|r| &r.config_hash == hash) {
                    ec = s.read_manifest(&ec.id)?;
                    return Ok(Some(prev));
                }
            }
            let data = ec.data(ec.model.kind == ModelKind::Trained)?;
            let (model, induction) = build_model(&ec, &data, store)?;
            ec.status.induction = Some(induction);
            if let Some(s) = store {
                s.write_manifest(&ec)?;
            }
            if !ec.verified() {
                return Ok(None);
            }
            let inputs = prepare_inputs(&ec, model.as_ref(), &data.test)?;
            run_ec(&ec, &inputs, bdm, settings, store).map(Some)
        })();
        SuiteJob { ec, record }
    })
}
