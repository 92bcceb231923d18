use serde::{Deserialize, Serialize};

use super::{build_model, parallel_map, prepare_inputs, run_ec, Bdm, EcInputs, ExperimentConfiguration, ModelKind, RunSettings};
use crate::cluster::PlaneSpotConfig;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, Aggregate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub config: PlaneSpotConfig,
}

impl SweepPoint {
    /// One point per confidence weight, everything else from `base`.
    pub fn w_grid(base: &PlaneSpotConfig, ws: &[f64]) -> Vec<SweepPoint> {
        ws.iter()
            .map(|&w| SweepPoint {
                label: format!("w={w}"),
                config: PlaneSpotConfig { w, ..base.clone() },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub dr: Aggregate,
    /// Over ECs whose FDR is defined; `None` if no EC has one.
    pub fdr: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the selected configuration.
    pub best: usize,
    /// ECs dropped for failing induction verification.
    pub excluded: Vec<String>,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Highest mean DR; ties go to the lower mean FDR (an undefined FDR counts
/// as worst), then to the earlier row.
pub fn select_best(rows: &[SweepRow]) -> Option<usize> {
    let fdr = |r: &SweepRow| r.fdr.map_or(f64::INFINITY, |a| a.mean);
    (0..rows.len()).reduce(|best, i| {
        let (a, b) = (&rows[best], &rows[i]);
        if b.dr.mean > a.dr.mean || (b.dr.mean == a.dr.mean && fdr(b) < fdr(a)) {
            i
        } else {
            best
        }
    })
}

/// Evaluates every grid point on the tuning suite. Each EC's model is built
/// once and shared by all points.
pub fn sweep(
    tuning: &[ExperimentConfiguration],
    grid: &[SweepPoint],
    settings: &RunSettings,
    threads: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty sweep grid".into()));
    }
    let prepared = parallel_map(tuning, threads, |ec| -> Result<Option<(ExperimentConfiguration, EcInputs)>> {
        let mut ec = ec.clone();
        let data = ec.data(ec.model.kind == ModelKind::Trained)?;
        let (model, induction) = build_model(&ec, &data, None)?;
        ec.status.induction = Some(induction);
        if !ec.verified() {
            return Ok(None);
        }
        let inputs = prepare_inputs(&ec, model.as_ref(), &data.test)?;
        Ok(Some((ec, inputs)))
    });
    let mut ready = Vec::new();
    let mut excluded = Vec::new();
    for (ec, p) in tuning.iter().zip(prepared) {
        match p? {
            Some(x) => ready.push(x),
            None => excluded.push(ec.id.clone()),
        }
    }
    if ready.is_empty() {
        return Err(Error::UnverifiedEc("no tuning EC passed induction verification".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let bdm = Bdm::PlaneSpot(point.config.clone());
        let records = parallel_map(&ready, threads, |(ec, inputs)| run_ec(ec, inputs, &bdm, settings, None))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let drs: Vec<f64> = records.iter().map(|r| r.report.dr).collect();
        let fdrs: Vec<f64> = records.iter().filter_map(|r| r.report.fdr).collect();
        rows.push(SweepRow {
            label: point.label.clone(),
            dr: aggregate(&drs),
            fdr: (!fdrs.is_empty()).then(|| aggregate(&fdrs)),
        });
    }
    let best = select_best(&rows).unwrap();
    Ok(SweepResult { rows, best, excluded })
}
