use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SweepPoint};
use super::train::{train, RunRecord, RunStatus, TrainOptions};
use crate::analysis::{mean_std, write_csv};
use crate::error::Result;

pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";

/// Final-evaluation statistics of one sweep value across its completed replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub parameter: String,
    pub value: String,
    pub replicas: usize,
    pub completed: usize,
    pub diverged: usize,
    pub nll_mean: Option<f64>,
    pub nll_std: Option<f64>,
    pub kl_mean: Option<f64>,
    pub kl_std: Option<f64>,
    pub elbo_mean: Option<f64>,
    pub elbo_std: Option<f64>,
    pub mig_mean: Option<f64>,
    pub mig_std: Option<f64>,
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(values);
        (Some(m), Some(s))
    }
}

pub fn summarize(parameter: &str, points: &[SweepPoint], records: &[RunRecord]) -> Vec<SweepSummaryRow> {
    let mut rows = Vec::new();
    let values = points.iter().map(|p| p.value_index).max().map_or(0, |m| m + 1);
    for vi in 0..values {
        let group: Vec<&RunRecord> = points
            .iter()
            .zip(records)
            .filter(|(p, _)| p.value_index == vi)
            .map(|(_, r)| r)
            .collect();
        let value = points.iter().find(|p| p.value_index == vi).map(|p| p.value.to_string());
        let done: Vec<_> = group
            .iter()
            .filter(|r| r.is_completed())
            .filter_map(|r| r.final_eval())
            .collect();
        let col = |f: fn(&super::train::EvalEntry) -> f64| stats(&done.iter().map(|e| f(e)).collect::<Vec<_>>());
        let (nll_mean, nll_std) = col(|e| e.losses.nll);
        let (kl_mean, kl_std) = col(|e| e.losses.kl);
        let (elbo_mean, elbo_std) = col(|e| e.losses.elbo_loss);
        let (mig_mean, mig_std) = stats(&done.iter().filter_map(|e| e.metrics.mig).collect::<Vec<_>>());
        rows.push(SweepSummaryRow {
            parameter: parameter.to_string(),
            value: value.unwrap_or_default(),
            replicas: group.len(),
            completed: done.len(),
            diverged: group
                .iter()
                .filter(|r| matches!(r.status, RunStatus::Diverged { .. }))
                .count(),
            nll_mean,
            nll_std,
            kl_mean,
            kl_std,
            elbo_mean,
            elbo_std,
            mig_mean,
            mig_std,
        });
    }
    rows
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SweepSummaryRow>,
    pub summary_path: PathBuf,
}

/// Runs every (value, replica) of the sweep block one after another. All derived configs
/// are validated before the first run starts; diverged replicas are recorded, not retried.
pub fn sweep(config: &RunConfig, runs_root: &Path) -> Result<SweepOutcome> {
    config.validate()?;
    let points = config.expand_sweep()?;
    let mut records = Vec::with_capacity(points.len());
    for p in &points {
        log::info!("sweep run {} (seed {})", p.config.run_id, p.config.seed);
        records.push(train(&p.config, &TrainOptions::new(runs_root))?);
    }
    let parameter = &config.sweep.as_ref().expect("validated sweep").parameter;
    let summary = summarize(parameter, &points, &records);
    let summary_path = runs_root.join(&config.run_id).join(SWEEP_SUMMARY);
    write_csv(&summary, &summary_path)?;
    Ok(SweepOutcome {
        records,
        summary,
        summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::SweepSpec;
    use serde_json::Value;

    #[test]
    fn beta_sweep_runs_every_replica_and_summarizes() {
        let root = tempfile::tempdir().unwrap();
        let mut c = crate::runner::train::tests::tiny("sw");
        c.steps = 2;
        c.eval.metric_samples = 0;
        c.eval.factorvae_votes = 0;
        c.sweep = Some(SweepSpec {
            parameter: "beta".into(),
            values: vec![Value::from(0.5), Value::from(2.0)],
            replicas: 2,
        });
        let out = sweep(&c, root.path()).unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.summary.len(), 2);
        assert!(out.summary.iter().all(|r| r.replicas == 2 && r.completed == 2));
        assert_eq!(out.records[2].config.objective.beta, 2.0);
        for r in &out.records {
            assert!(root.path().join(&r.run_id).join("record.json").exists());
        }
        let rows: Vec<SweepSummaryRow> = crate::analysis::read_csv(&out.summary_path).unwrap();
        assert_eq!(rows, out.summary);
    }

    #[test]
    fn invalid_sweep_starts_no_run() {
        let root = tempfile::tempdir().unwrap();
        let mut c = crate::runner::train::tests::tiny("bad");
        c.sweep = Some(SweepSpec {
            parameter: "architecture.decoder.upscale_count".into(),
            values: vec![Value::from(0), Value::from(9)],
            replicas: 1,
        });
        assert!(matches!(sweep(&c, root.path()), Err(crate::Error::Config(_))));
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
    }
}
