use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::{ExperimentConfiguration, RunRecord};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, aggregate_failures, Aggregate, FailureBreakdown};

/// A scored run next to the EC it ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub ec: ExperimentConfiguration,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c].as_str()).collect())
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn agg_cells(a: &Aggregate) -> [String; 5] {
    [a.n.to_string(), num(a.mean), num(a.standard_error), num(a.ci_low), num(a.ci_high)]
}

fn opt_agg(a: Option<Aggregate>) -> [String; 2] {
    match a {
        Some(a) => [num(a.mean), num(a.standard_error)],
        None => [String::new(), String::new()],
    }
}

fn failure_cells(f: &FailureBreakdown) -> [String; 4] {
    [num(f.not_returned), num(f.found), num(f.merged), num(f.impure)]
}

/// Builds every report table from scored runs:
///
/// * `summary`: per method, mean DR and FDR with standard errors
/// * `dr_by_blindspot_count`: per method and blindspot count
/// * `covered_by_triplets`: fraction of true blindspots covered, per triplet count
/// * `covered_by_attribute`: the same, split by whether a blindspot constrains an attribute
/// * `failures`: failure categories of uncovered blindspots, top-k and untruncated lists
/// * `per_ec`: one row per run
///
/// Groups without observations are omitted.
pub fn report(entries: &[ReportEntry]) -> Result<Vec<Table>> {
    if entries.is_empty() {
        return Err(Error::Invalid("report needs at least one run record".into()));
    }
    for e in entries {
        if e.ec.id != e.record.ec_id {
            return Err(Error::Invalid(format!(
                "run {} belongs to {}, not {}",
                e.record.run_id, e.record.ec_id, e.ec.id
            )));
        }
        if e.record.report.covered.len() != e.ec.blindspots.len() {
            return Err(Error::DimensionMismatch(format!(
                "run {} scores {} blindspots, EC {} has {}",
                e.record.run_id,
                e.record.report.covered.len(),
                e.ec.id,
                e.ec.blindspots.len()
            )));
        }
    }
    let mut by_method: BTreeMap<&str, Vec<&ReportEntry>> = BTreeMap::new();
    for e in entries {
        by_method.entry(e.record.bdm.as_str()).or_default().push(e);
    }

    let mut summary = Table::new("summary", &["method", "n_ecs", "dr", "dr_se", "fdr", "fdr_se"]);
    let mut by_count = Table::new(
        "dr_by_blindspot_count",
        &["method", "blindspots", "n", "dr", "se", "ci_low", "ci_high"],
    );
    let mut by_triplets = Table::new(
        "covered_by_triplets",
        &["method", "triplets", "n", "covered", "se", "ci_low", "ci_high"],
    );
    let mut by_attr = Table::new(
        "covered_by_attribute",
        &["method", "attribute", "constrained", "n", "covered", "se", "ci_low", "ci_high"],
    );
    let mut failures = Table::new(
        "failures",
        &["method", "list", "n_ecs", "not_returned", "found", "merged", "impure"],
    );
    for (method, runs) in &by_method {
        let drs: Vec<f64> = runs.iter().map(|e| e.record.report.dr).collect();
        let fdrs: Vec<f64> = runs.iter().filter_map(|e| e.record.report.fdr).collect();
        let dr = aggregate(&drs);
        let mut row = vec![method.to_string(), runs.len().to_string(), num(dr.mean), num(dr.standard_error)];
        row.extend(opt_agg((!fdrs.is_empty()).then(|| aggregate(&fdrs))));
        summary.rows.push(row);

        let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for e in runs {
            counts.entry(e.ec.blindspots.len()).or_default().push(e.record.report.dr);
        }
        for (m, v) in counts {
            let mut row = vec![method.to_string(), m.to_string()];
            row.extend(agg_cells(&aggregate(&v)));
            by_count.rows.push(row);
        }

        // Per true blindspot: (spec, covered).
        let outcomes: Vec<_> = runs
            .iter()
            .flat_map(|e| e.ec.blindspots.iter().zip(e.record.report.covered.iter().copied()))
            .collect();
        let indicator = |c: bool| if c { 1.0 } else { 0.0 };
        let mut trip: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (b, c) in &outcomes {
            trip.entry(b.len()).or_default().push(indicator(*c));
        }
        for (t, v) in trip {
            let mut row = vec![method.to_string(), t.to_string()];
            row.extend(agg_cells(&aggregate(&v)));
            by_triplets.rows.push(row);
        }
        let mut attr: BTreeMap<(String, bool), Vec<f64>> = BTreeMap::new();
        let keys: std::collections::BTreeSet<_> = outcomes.iter().flat_map(|(b, _)| b.keys()).collect();
        for key in keys {
            for (b, c) in &outcomes {
                attr.entry((key.to_string(), b.contains_key(key)))
                    .or_default()
                    .push(indicator(*c));
            }
        }
        for ((key, constrained), v) in attr {
            let mut row = vec![method.to_string(), key, constrained.to_string()];
            row.extend(agg_cells(&aggregate(&v)));
            by_attr.rows.push(row);
        }

        for (list, per_ec) in [
            ("top_k", runs.iter().map(|e| e.record.report.failures.clone()).collect::<Vec<_>>()),
            ("full", runs.iter().map(|e| e.record.untruncated_failures.clone()).collect()),
        ] {
            if let Some(f) = aggregate_failures(&per_ec) {
                let n = per_ec.iter().filter(|f| !f.is_empty()).count();
                let mut row = vec![method.to_string(), list.to_string(), n.to_string()];
                row.extend(failure_cells(&f));
                failures.rows.push(row);
            }
        }
    }

    let mut per_ec = Table::new(
        "per_ec",
        &["ec_id", "method", "run_id", "blindspots", "n_hypotheses", "dr", "fdr", "top_u", "duration_secs"],
    );
    for e in entries {
        let r = &e.record;
        per_ec.rows.push(vec![
            r.ec_id.clone(),
            r.bdm.clone(),
            r.run_id.clone(),
            e.ec.blindspots.len().to_string(),
            r.n_hypotheses.to_string(),
            num(r.report.dr),
            r.report.fdr.map(num).unwrap_or_default(),
            r.report.top_u.map(|u| u.to_string()).unwrap_or_default(),
            format!("{:.3}", r.duration_secs),
        ]);
    }
    Ok(vec![summary, by_count, by_triplets, by_attr, failures, per_ec])
}

/// Writes each table as `<dir>/<name>.csv`.
pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        t.write_csv(std::io::BufWriter::new(f))?;
    }
    Ok(())
}
