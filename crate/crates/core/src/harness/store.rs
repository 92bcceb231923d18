//! On-disk layout of a suite:
//!
//! ```text
//! <root>/suite.json
//! <root>/results.jsonl
//! <root>/<ec>/manifest.json
//! <root>/<ec>/truth/{train,val,test}.json
//! <root>/<ec>/images/{train,val,test}/<id>.png
//! <root>/<ec>/model.json
//! <root>/<ec>/runs/<hash>-<n>.{json,hypotheses.json,outputs.csv,scatter.csv}
//! ```

use serde::{Deserialize, Serialize};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::{EcData, ExperimentConfiguration, RunRecord, SuiteConfig};
use crate::error::{Error, Result};
use crate::models::LabeledSplit;
use crate::scenegen::ImageId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteIndex {
    pub config: SuiteConfig,
    pub master_seed: u64,
    pub ec_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBlindspot {
    pub id: usize,
    pub image_ids: Vec<ImageId>,
}

/// Labels and blindspot membership of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub image_ids: Vec<ImageId>,
    pub clean: Vec<bool>,
    pub labels: Vec<bool>,
    pub blindspots: Vec<TruthBlindspot>,
}

impl TruthFile {
    pub fn of(ec: &ExperimentConfiguration, split: &LabeledSplit) -> Self {
        TruthFile {
            image_ids: split.scenes.iter().map(|s| s.image_id).collect(),
            clean: split.clean.clone(),
            labels: split.labels.clone(),
            blindspots: ec
                .blindspots
                .iter()
                .map(|b| TruthBlindspot {
                    id: b.id,
                    image_ids: split
                        .scenes
                        .iter()
                        .filter(|s| crate::blindspots::matches(b, s))
                        .map(|s| s.image_id)
                        .collect(),
                })
                .collect(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Exclusive lock on one EC directory, held until dropped.
pub struct EcLock {
    path: PathBuf,
}

impl EcLock {
    pub fn acquire(dir: &Path, timeout: Duration) -> Result<Self> {
        let path = dir.join(".lock");
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(EcLock { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > timeout {
                        return Err(Error::io(&path, std::io::Error::new(e.kind(), "lock held too long")));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
    }
}

impl Drop for EcLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

const LOCK_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteStore {
    pub root: PathBuf,
}

impl SuiteStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SuiteStore { root: root.into() }
    }

    pub fn ec_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn manifest_path(&self, id: &str) -> PathBuf {
        self.ec_dir(id).join("manifest.json")
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.ec_dir(id).join("model.json")
    }

    pub fn runs_dir(&self, id: &str) -> PathBuf {
        self.ec_dir(id).join("runs")
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join("results.jsonl")
    }

    pub fn lock(&self, id: &str) -> Result<EcLock> {
        let dir = self.ec_dir(id);
        mkdir(&dir)?;
        EcLock::acquire(&dir, LOCK_TIMEOUT)
    }

    pub fn write_manifest(&self, ec: &ExperimentConfiguration) -> Result<()> {
        let dir = self.ec_dir(&ec.id);
        mkdir(&dir)?;
        write_json(&self.manifest_path(&ec.id), ec)
    }

    /// Loads and re-validates one manifest.
    pub fn read_manifest(&self, id: &str) -> Result<ExperimentConfiguration> {
        let ec: ExperimentConfiguration = read_json(&self.manifest_path(id))?;
        if ec.id != id {
            return Err(Error::Invalid(format!("manifest in {id}/ belongs to {}", ec.id)));
        }
        ec.validate()?;
        Ok(ec)
    }

    pub fn write_truth(&self, ec: &ExperimentConfiguration, data: &EcData) -> Result<()> {
        let dir = self.ec_dir(&ec.id).join("truth");
        mkdir(&dir)?;
        for (name, split) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
            write_json(&dir.join(format!("{name}.json")), &TruthFile::of(ec, split))?;
        }
        Ok(())
    }

    pub fn read_truth(&self, id: &str, split: &str) -> Result<TruthFile> {
        read_json(&self.ec_dir(id).join("truth").join(format!("{split}.json")))
    }

    pub fn write_images(&self, ec: &ExperimentConfiguration, data: &EcData) -> Result<()> {
        for (name, split) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
            let dir = self.ec_dir(&ec.id).join("images").join(name);
            mkdir(&dir)?;
            for (scene, img) in split.scenes.iter().zip(&split.images) {
                img.save_png(&dir.join(format!("{}.png", scene.image_id)))?;
            }
        }
        Ok(())
    }

    /// Fresh record stem `<hash>-<n>` under the EC's runs directory; earlier
    /// runs are never overwritten.
    pub fn next_run_stem(&self, id: &str, hash: &str) -> Result<String> {
        let dir = self.runs_dir(id);
        mkdir(&dir)?;
        let n = (0..)
            .find(|n| !dir.join(format!("{hash}-{n}.json")).exists())
            .unwrap();
        Ok(format!("{hash}-{n}"))
    }

    pub fn run_records(&self, id: &str) -> Result<Vec<RunRecord>> {
        let dir = self.runs_dir(id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && name.matches('.').count() == 1
            })
            .collect();
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    pub fn write_record(&self, record: &RunRecord) -> Result<()> {
        let path = self.runs_dir(&record.ec_id).join(format!("{}.json", record.run_id));
        if path.exists() {
            return Err(Error::Invalid(format!("run record {} already exists", path.display())));
        }
        write_json(&path, record)?;
        self.append_result(record)
    }

    fn append_result(&self, record: &RunRecord) -> Result<()> {
        let _guard = EcLock::acquire(&self.root, LOCK_TIMEOUT)?;
        let path = self.results_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        f.write_all(&line).map_err(|e| Error::io(&path, e))
    }

    pub fn results(&self) -> Result<Vec<RunRecord>> {
        let path = self.results_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

/// Writes the suite index and every manifest; with `with_data`, also the
/// truth files and (when `images`) the rendered PNGs.
pub fn save_suite(
    store: &SuiteStore,
    cfg: &SuiteConfig,
    master_seed: u64,
    ecs: &[ExperimentConfiguration],
    with_data: bool,
    images: bool,
) -> Result<()> {
    mkdir(&store.root)?;
    let index = SuiteIndex {
        config: cfg.clone(),
        master_seed,
        ec_ids: ecs.iter().map(|e| e.id.clone()).collect(),
    };
    write_json(&store.root.join("suite.json"), &index)?;
    for ec in ecs {
        store.write_manifest(ec)?;
        if with_data {
            let data = ec.data(images)?;
            store.write_truth(ec, &data)?;
            if images {
                store.write_images(ec, &data)?;
            }
        }
    }
    Ok(())
}

pub fn load_suite(store: &SuiteStore) -> Result<(SuiteIndex, Vec<ExperimentConfiguration>)> {
    let index: SuiteIndex = read_json(&store.root.join("suite.json"))?;
    let ecs = index
        .ec_ids
        .iter()
        .map(|id| store.read_manifest(id))
        .collect::<Result<Vec<_>>>()?;
    Ok((index, ecs))
}
