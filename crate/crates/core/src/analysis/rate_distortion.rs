use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Final losses of one run in a beta sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub beta: f64,
    pub nll: f64,
    pub kl: f64,
    pub mig: Option<f64>,
}

/// Per-beta mean and population std over replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDistortionRow {
    pub beta: f64,
    pub replicas: usize,
    pub nll_mean: f64,
    pub nll_std: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub mig_mean: Option<f64>,
    pub mig_std: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups runs by beta (ascending) and aggregates each group.
pub fn rate_distortion_table(runs: &[RunPoint]) -> Result<Vec<RateDistortionRow>> {
    if runs.is_empty() {
        return Err(domain!("no runs to aggregate"));
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let rows = sorted
        .chunk_by(|a, b| a.beta == b.beta)
        .map(|group| {
            let col = |f: fn(&RunPoint) -> f64| group.iter().map(f).collect::<Vec<_>>();
            let (nll_mean, nll_std) = mean_std(&col(|r| r.nll));
            let (kl_mean, kl_std) = mean_std(&col(|r| r.kl));
            let migs: Vec<f64> = group.iter().filter_map(|r| r.mig).collect();
            let (mig_mean, mig_std) = if migs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&migs);
                (Some(m), Some(s))
            };
            RateDistortionRow {
                beta: group[0].beta,
                replicas: group.len(),
                nll_mean,
                nll_std,
                kl_mean,
                kl_std,
                mig_mean,
                mig_std,
            }
        })
        .collect();
    Ok(rows)
}
