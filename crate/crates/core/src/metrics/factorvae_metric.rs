use rand::seq::SliceRandom;
use rand::Rng;

use super::table::{sample_configurations, FactorEncoder};
use crate::dataset::{DatasetSpec, FactorKind, FactorName, FactorVector};
use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FactorVaeMetricConfig {
    pub votes: usize,
    pub batch_per_vote: usize,
    pub train_fraction: f64,
    /// Samples used to estimate the per-latent scale.
    pub scale_samples: usize,
    /// Latents whose mean varies less than this across the data are ignored.
    pub prune_threshold: f64,
}

impl Default for FactorVaeMetricConfig {
    fn default() -> Self {
        FactorVaeMetricConfig {
            votes: 800,
            batch_per_vote: 64,
            train_fraction: 0.8,
            scale_samples: 10_000,
            prune_threshold: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorVaeScore {
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// No latent varies across the data; the accuracy is chance level.
    pub degenerate: bool,
    pub active_latents: Vec<usize>,
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn draw_value<R: Rng + ?Sized>(kind: &FactorKind, rng: &mut R) -> f64 {
    match kind {
        FactorKind::Constant(v) => *v,
        FactorKind::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
        FactorKind::Discrete(vs) => vs[rng.random_range(0..vs.len())],
    }
}

/// Majority-vote accuracy of predicting the fixed factor from the least-varying latent.
pub fn factorvae_metric<E: FactorEncoder + ?Sized, R: Rng + ?Sized>(
    encoder: &E,
    spec: &DatasetSpec,
    config: &FactorVaeMetricConfig,
    rng: &mut R,
) -> Result<FactorVaeScore> {
    let varying: Vec<(FactorName, FactorKind)> = spec
        .varying_factors()
        .iter()
        .map(|f| (f.name, f.kind.clone()))
        .collect();
    let nf = varying.len();
    if nf < 2 {
        return Err(domain!("the FactorVAE metric needs at least 2 varying factors"));
    }
    if config.votes < 2 || config.batch_per_vote < 2 {
        return Err(domain!("the FactorVAE metric needs at least 2 votes of at least 2 samples"));
    }
    let k = encoder.latent_dim();
    let global = encoder.encode_factors(&sample_configurations(spec, config.scale_samples, rng))?;
    let scale: Vec<f64> = (0..k)
        .map(|i| std_dev(global.iter().map(|p| p.mean[i])))
        .collect();
    let active: Vec<usize> = (0..k).filter(|&i| scale[i] >= config.prune_threshold).collect();
    if active.is_empty() {
        return Ok(FactorVaeScore {
            accuracy: 1.0 / nf as f64,
            train_accuracy: 1.0 / nf as f64,
            degenerate: true,
            active_latents: active,
        });
    }

    let mut votes = Vec::with_capacity(config.votes);
    for _ in 0..config.votes {
        let f = rng.random_range(0..nf);
        let (name, kind) = &varying[f];
        let value = draw_value(kind, rng);
        let mut batch: Vec<FactorVector> = Vec::with_capacity(config.batch_per_vote);
        while batch.len() < config.batch_per_vote {
            // a fixed value inside a held-out band may leave few legal partners; cap the redraws
            for attempt in 0.. {
                let mut c = sample_configurations(spec, 1, rng).pop().expect("one configuration");
                c.set(*name, value);
                if spec.evaluate_holdout || !spec.in_holdout(&c) || attempt == 100 {
                    batch.push(c);
                    break;
                }
            }
        }
        let posts = encoder.encode_factors(&batch)?;
        let d = active
            .iter()
            .map(|&i| {
                let s = std_dev(posts.iter().map(|p| p.mean[i] / scale[i]));
                (i, s * s)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("active latents");
        votes.push((d, f));
    }
    votes.shuffle(rng);
    let n_train = ((config.votes as f64 * config.train_fraction).round() as usize).clamp(1, config.votes - 1);
    let (train, test) = votes.split_at(n_train);
    let mut counts = vec![vec![0usize; nf]; k];
    for &(d, f) in train {
        counts[d][f] += 1;
    }
    let classifier: Vec<usize> = counts
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(f, _)| f)
                .unwrap_or(0)
        })
        .collect();
    let acc = |set: &[(usize, usize)]| set.iter().filter(|&&(d, f)| classifier[d] == f).count() as f64 / set.len() as f64;
    Ok(FactorVaeScore {
        accuracy: acc(test),
        train_accuracy: acc(train),
        degenerate: false,
        active_latents: active,
    })
}
