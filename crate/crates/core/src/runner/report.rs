use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{RunRecord, RunStatus, RECORD_FILE};
use crate::analysis::{rate_distortion_table, write_csv, RateDistortionRow, RunPoint};
use crate::error::{domain, Error, Result};

pub const RUNS_SUMMARY: &str = "runs_summary.csv";
pub const RATE_DISTORTION: &str = "rate_distortion.csv";

/// Final evaluation of one run, flattened for a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummaryRow {
    pub run_id: String,
    pub status: String,
    pub decoder: String,
    pub beta: f64,
    pub seed: u64,
    pub step: Option<u64>,
    pub nll: Option<f64>,
    pub kl: Option<f64>,
    pub elbo: Option<f64>,
    pub mig: Option<f64>,
    pub factorvae_metric: Option<f64>,
    pub latents_used: Option<usize>,
}

impl RunSummaryRow {
    pub fn of(r: &RunRecord) -> Self {
        let e = r.final_eval();
        RunSummaryRow {
            run_id: r.run_id.clone(),
            status: match &r.status {
                RunStatus::Running => "running".into(),
                RunStatus::Completed => "completed".into(),
                RunStatus::Diverged { step, .. } => format!("diverged@{step}"),
            },
            decoder: r.config.architecture.decoder.family().into(),
            beta: r.config.objective.beta,
            seed: r.config.seed,
            step: e.map(|e| e.step),
            nll: e.map(|e| e.losses.nll),
            kl: e.map(|e| e.losses.kl),
            elbo: e.map(|e| e.losses.elbo_loss),
            mig: e.and_then(|e| e.metrics.mig),
            factorvae_metric: e.and_then(|e| e.metrics.factorvae_metric),
            latents_used: e.and_then(|e| e.metrics.latents_used),
        }
    }
}

/// Every `record.json` in the immediate subdirectories of `dir`, sorted by run id.
pub fn collect_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path().join(RECORD_FILE);
        if path.is_file() {
            out.push(RunRecord::read(&path)?);
        }
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Report {
    pub runs: Vec<RunSummaryRow>,
    /// Completed runs grouped by beta, when more than one beta is present.
    pub rate_distortion: Option<Vec<RateDistortionRow>>,
    pub files: Vec<PathBuf>,
}

/// Aggregates the runs under `dir` into `runs_summary.csv` and, for several betas,
/// `rate_distortion.csv`.
pub fn report(dir: &Path) -> Result<Report> {
    let records = collect_records(dir)?;
    if records.is_empty() {
        return Err(domain!("no run records under {}", dir.display()));
    }
    let runs: Vec<RunSummaryRow> = records.iter().map(RunSummaryRow::of).collect();
    let mut files = vec![dir.join(RUNS_SUMMARY)];
    write_csv(&runs, &files[0])?;
    let points: Vec<RunPoint> = records
        .iter()
        .filter(|r| r.is_completed())
        .filter_map(|r| {
            r.final_eval().map(|e| RunPoint {
                beta: r.config.objective.beta,
                nll: e.losses.nll,
                kl: e.losses.kl,
                mig: e.metrics.mig,
            })
        })
        .collect();
    let mut betas: Vec<f64> = points.iter().map(|p| p.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let rate_distortion = if betas.len() > 1 {
        let table = rate_distortion_table(&points)?;
        let path = dir.join(RATE_DISTORTION);
        write_csv(&table, &path)?;
        files.push(path);
        Some(table)
    } else {
        None
    };
    Ok(Report {
        runs,
        rate_distortion,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::train::{train, TrainOptions};

    #[test]
    fn report_tables_cover_all_runs_and_group_betas() {
        let root = tempfile::tempdir().unwrap();
        for (id, beta) in [("a", 0.5), ("b", 0.5), ("c", 2.0)] {
            let mut c = crate::runner::train::tests::tiny(id);
            c.steps = 2;
            c.eval.metric_samples = 0;
            c.eval.factorvae_votes = 0;
            c.objective.beta = beta;
            train(&c, &TrainOptions::new(root.path())).unwrap();
        }
        std::fs::create_dir_all(root.path().join("not-a-run")).unwrap();
        let r = report(root.path()).unwrap();
        assert_eq!(r.runs.len(), 3);
        assert!(r.runs.iter().all(|x| x.status == "completed" && x.mig.is_none()));
        let rd = r.rate_distortion.unwrap();
        assert_eq!(rd.iter().map(|x| (x.beta, x.replicas)).collect::<Vec<_>>(), vec![(0.5, 2), (2.0, 1)]);
        assert!(root.path().join(RATE_DISTORTION).exists());
        assert!(report(&root.path().join("not-a-run")).is_err());
    }
}
