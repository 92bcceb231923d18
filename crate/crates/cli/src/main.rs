//! `spotcheck`: generate EC suites, build models, run discovery, score,
//! sweep and report.
//!
//! Exit status: 0 on success, 2 on validation errors, 3 on numerical
//! failures, 1 on anything else (I/O).

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use spotcheck::cluster::{HypothesisList, PlaneSpotConfig};
use spotcheck::error::{Error, Result};
use spotcheck::harness::{
    self, build_model, check_disjoint, generate_ec_suite, load_suite, parallel_map, report,
    run_suite, save_suite, select_best, write_tables, Bdm, ExperimentConfiguration, ModelKind,
    ModelSettings, ReportEntry, RunSettings, SuiteConfig, SuiteStore, SweepPoint, SweepRow,
};
use spotcheck::metrics::evaluate;
use spotcheck::models::SplitTag;

#[derive(Parser)]
#[command(name = "spotcheck", version, about = "Blindspot-discovery benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML or JSON configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "spotcheck-out")]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an EC suite (config: suite settings).
    Gen {
        #[command(flatten)]
        common: Common,
        /// Also write per-split ground-truth image-id sets.
        #[arg(long)]
        truth: bool,
        /// Also render and write PNG images (implies --truth).
        #[arg(long)]
        images: bool,
    },
    /// Build every EC's model and check blindspot induction (config: model settings override).
    Train {
        #[command(flatten)]
        common: Common,
        /// Suite directory; defaults to --out.
        #[arg(long)]
        suite: Option<PathBuf>,
    },
    /// Run PlaneSpot on every verified EC, or score an imported hypothesis list (config: discovery settings).
    Discover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
        /// JSON hypothesis list produced by an external method; needs --ec.
        #[arg(long)]
        import: Option<PathBuf>,
        #[arg(long)]
        ec: Option<String>,
        /// Method name recorded for an imported list.
        #[arg(long, default_value = "external")]
        name: String,
        /// Run even if a record for this configuration already exists.
        #[arg(long)]
        rerun: bool,
    },
    /// Re-score stored hypothesis lists against regenerated ground truth (config: scoring settings).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
    },
    /// Grid search over the confidence weight on a tuning suite (config: sweep settings).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Evaluation suite the tuning suite must be disjoint from.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Aggregate run records into CSV tables and collect scatter exports.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct DiscoverConfig {
    planespot: PlaneSpotConfig,
    settings: RunSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SweepConfig {
    suite: SuiteConfig,
    base: PlaneSpotConfig,
    w: Vec<f64>,
    settings: RunSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            suite: SuiteConfig::tuning(),
            base: PlaneSpotConfig::default(),
            w: vec![0.0, 0.025, 0.05, 0.1],
            settings: RunSettings::default(),
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display()))),
        Some("json") => serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display()))),
        _ => Err(Error::Invalid(format!("{}: config must be .toml or .json", path.display()))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn open_suite(dir: &Path) -> Result<(SuiteStore, Vec<ExperimentConfiguration>)> {
    let store = SuiteStore::new(dir);
    let (_, ecs) = load_suite(&store)?;
    Ok((store, ecs))
}

fn gen(common: &Common, truth: bool, images: bool) -> Result<()> {
    let cfg: SuiteConfig = load_config(common.config.as_deref())?;
    let ecs = generate_ec_suite(&cfg, common.seed)?;
    let store = SuiteStore::new(&common.out);
    save_suite(&store, &cfg, common.seed, &ecs, truth || images, images)?;
    println!("wrote {} ECs to {}", ecs.len(), common.out.display());
    Ok(())
}

fn train(common: &Common, suite: &Path) -> Result<()> {
    let (store, ecs) = open_suite(suite)?;
    let settings: Option<ModelSettings> = match &common.config {
        Some(p) => Some(load_config(Some(p))?),
        None => None,
    };
    let outcomes = parallel_map(&ecs, common.threads(), |ec| -> Result<ExperimentConfiguration> {
        let _lock = store.lock(&ec.id)?;
        let mut ec = ec.clone();
        if let Some(s) = &settings {
            ec.model = s.clone();
            ec.model.train.arch.resolution = ec.resolution as usize;
            ec.validate()?;
        }
        let data = ec.data(ec.model.kind == ModelKind::Trained)?;
        let (_, induction) = build_model(&ec, &data, Some(&store))?;
        ec.status.induction = Some(induction);
        store.write_manifest(&ec)?;
        Ok(ec)
    });
    let mut verified = 0;
    for o in outcomes {
        let ec = o?;
        let r = ec.status.induction.as_ref().unwrap();
        println!(
            "{}: outside {:.4}, inside {:?} -> {}",
            ec.id,
            r.accuracy_outside,
            r.accuracy_inside,
            if ec.verified() { "verified" } else { "excluded" }
        );
        verified += ec.verified() as usize;
    }
    println!("{verified}/{} ECs verified", ecs.len());
    Ok(())
}

fn discover(common: &Common, suite: &Path, import: Option<&Path>, ec_id: Option<&str>, name: &str, rerun: bool) -> Result<()> {
    let (store, mut ecs) = open_suite(suite)?;
    let cfg: DiscoverConfig = load_config(common.config.as_deref())?;
    let bdm = match import {
        Some(path) => {
            let id = ec_id.ok_or_else(|| Error::Invalid("--import needs --ec".into()))?;
            ecs.retain(|e| e.id == id);
            let ec = ecs.first().ok_or_else(|| Error::Invalid(format!("no EC {id} in suite")))?;
            let test = ec.split(SplitTag::Test, false)?;
            let known = test.positives().iter().map(|&i| test.scenes[i].image_id).collect();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Bdm::Imported {
                name: name.into(),
                hypotheses: HypothesisList::from_json(&text, &known)?,
            }
        }
        None => {
            if let Some(id) = ec_id {
                ecs.retain(|e| e.id == id);
            }
            Bdm::PlaneSpot(cfg.planespot)
        }
    };
    let jobs = run_suite(&ecs, &bdm, &cfg.settings, Some(&store), common.threads(), rerun);
    let mut first_err = None;
    let (mut scored, mut excluded) = (0, 0);
    for job in jobs {
        match job.record {
            Ok(Some(r)) => {
                scored += 1;
                println!("{} {}: DR {:.3}, FDR {:?}", r.ec_id, r.run_id, r.report.dr, r.report.fdr);
            }
            Ok(None) => {
                excluded += 1;
                println!("{}: excluded (induction not verified)", job.ec.id);
            }
            Err(e) => {
                eprintln!("{}: {e}", job.ec.id);
                first_err.get_or_insert(e);
            }
        }
    }
    println!("{scored} scored, {excluded} excluded");
    first_err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct EvalLine {
    ec_id: String,
    run_id: String,
    bdm: String,
    report: spotcheck::metrics::MetricReport,
    matches_record: bool,
}

fn eval(common: &Common, suite: &Path) -> Result<()> {
    let (store, ecs) = open_suite(suite)?;
    let settings: RunSettings = load_config(common.config.as_deref())?;
    let mut lines = Vec::new();
    for ec in &ecs {
        let records = store.run_records(&ec.id)?;
        if records.is_empty() {
            continue;
        }
        let test = ec.split(SplitTag::Test, false)?;
        let truths = ec.truths(&test);
        let known = test.positives().iter().map(|&i| test.scenes[i].image_id).collect();
        for r in records {
            let Some(file) = &r.hypotheses_file else { continue };
            let path = store.runs_dir(&ec.id).join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let hyps = HypothesisList::from_json(&text, &known)?;
            let report = evaluate(&hyps.truncated(settings.k_return).image_sets(), &truths, &settings.thresholds)?;
            println!("{} {}: DR {:.3}, FDR {:?}", r.ec_id, r.run_id, report.dr, report.fdr);
            lines.push(EvalLine {
                matches_record: report == r.report,
                ec_id: r.ec_id,
                run_id: r.run_id,
                bdm: r.bdm,
                report,
            });
        }
    }
    write_json(&common.out.join("eval.json"), &lines)
}

fn sweep(common: &Common, against: Option<&Path>) -> Result<()> {
    let cfg: SweepConfig = load_config(common.config.as_deref())?;
    let tuning = generate_ec_suite(&cfg.suite, common.seed)?;
    if let Some(dir) = against {
        let (_, eval) = open_suite(dir)?;
        check_disjoint(&tuning, &eval)?;
    }
    let grid = SweepPoint::w_grid(&cfg.base, &cfg.w);
    let result = harness::sweep(&tuning, &grid, &cfg.settings, common.threads())?;
    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "config", "DR", "SE", "FDR", "SE");
    for r in &result.rows {
        let (f, fse) = r.fdr.map_or((f64::NAN, f64::NAN), |a| (a.mean, a.standard_error));
        println!("{:<12} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", r.label, r.dr.mean, r.dr.standard_error, f, fse);
    }
    debug_assert_eq!(select_best(&result.rows), Some(result.best));
    println!("best: {}", result.best_row().label);
    write_json(&common.out.join("sweep.json"), &result)?;
    write_tables(&common.out, &[sweep_table(&result.rows)])
}

fn sweep_table(rows: &[SweepRow]) -> harness::Table {
    harness::Table {
        name: "sweep".into(),
        header: ["config", "n", "dr", "dr_se", "fdr", "fdr_se"].map(String::from).to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                let (f, fse) = r.fdr.map_or((String::new(), String::new()), |a| {
                    (format!("{:.6}", a.mean), format!("{:.6}", a.standard_error))
                });
                vec![
                    r.label.clone(),
                    r.dr.n.to_string(),
                    format!("{:.6}", r.dr.mean),
                    format!("{:.6}", r.dr.standard_error),
                    f,
                    fse,
                ]
            })
            .collect(),
    }
}

fn report_cmd(common: &Common, suite: &Path) -> Result<()> {
    let (store, ecs) = open_suite(suite)?;
    let by_id: BTreeMap<&str, &ExperimentConfiguration> = ecs.iter().map(|e| (e.id.as_str(), e)).collect();
    let entries = store
        .results()?
        .into_iter()
        .map(|record| {
            let ec = by_id
                .get(record.ec_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("record for unknown EC {}", record.ec_id)))?;
            Ok(ReportEntry { ec: (*ec).clone(), record })
        })
        .collect::<Result<Vec<_>>>()?;
    let tables = report(&entries)?;
    write_tables(&common.out, &tables)?;
    let scatter = common.out.join("scatter");
    std::fs::create_dir_all(&scatter).map_err(|e| Error::io(&scatter, e))?;
    let mut copied = 0;
    for e in &entries {
        let src = store.runs_dir(&e.ec.id).join(format!("{}.scatter.csv", e.record.run_id));
        if src.exists() {
            let dst = scatter.join(format!("{}-{}.csv", e.ec.id, e.record.run_id));
            std::fs::copy(&src, &dst).map_err(|err| Error::io(&src, err))?;
            copied += 1;
        }
    }
    println!("{} tables and {copied} scatter files in {}", tables.len(), common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { common, truth, images } => gen(common, *truth, *images),
        Command::Train { common, suite } => train(common, suite.as_deref().unwrap_or(&common.out)),
        Command::Discover { common, suite, import, ec, name, rerun } => discover(
            common,
            suite.as_deref().unwrap_or(&common.out),
            import.as_deref(),
            ec.as_deref(),
            name,
            *rerun,
        ),
        Command::Eval { common, suite } => eval(common, suite.as_deref().unwrap_or(&common.out)),
        Command::Sweep { common, against } => sweep(common, against.as_deref()),
        Command::Report { common, suite } => report_cmd(common, suite.as_deref().unwrap_or(&common.out)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                3
            } else if e.is_validation() {
                2
            } else {
                1
            })
        }
    }
}
