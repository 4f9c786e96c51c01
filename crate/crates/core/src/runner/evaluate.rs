use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{evaluate_model, load_vae, upsert_metric_row, write_text, MetricRow, CONFIG_FILE, METRICS_FILE};
use crate::analysis::{
    embed_factor_grid, traverse, write_geometry_csv, write_geometry_png, write_traversal_png, GeometryEmbedding,
    TraversalConfig,
};
use crate::dataset::{make_factor_grid, sample_batch, DatasetSpec, FactorKind, FactorName, Holdout};
use crate::error::{config_err, domain, Error, Result};
use crate::metrics::RenderingEncoder;
use crate::nn::{OutputMap, Vae};
use crate::objectives::Likelihood;
use crate::rng::stream;

const TRAVERSAL_SEEDS: u64 = 5;
const GEOMETRY_PLOT_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalWhat {
    Metrics,
    Traversals,
    Geometry,
}

/// Linearity of a factor-grid embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub factors: [FactorName; 2],
    pub latents: [usize; 2],
    pub r2: f64,
    /// Affine fit on held-out grid points alone.
    pub holdout_r2: Option<f64>,
    /// Affine fit on training-region points, scored on held-out points.
    pub holdout_transfer_r2: Option<f64>,
}

impl GeometrySummary {
    pub fn of(e: &GeometryEmbedding) -> Self {
        let any_held = e.holdout_flags.iter().any(|&h| h);
        let opt = |r: Result<f64>| match r {
            Ok(v) => Some(v),
            Err(err) => {
                log::warn!("held-out linearity undefined: {err}");
                None
            }
        };
        GeometrySummary {
            factors: e.grid.axis_factors,
            latents: e.latents,
            r2: e.linearity_r2,
            holdout_r2: if any_held { opt(e.holdout_r2()) } else { None },
            holdout_transfer_r2: if any_held { opt(e.holdout_transfer_r2()) } else { None },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    pub metrics: Option<MetricRow>,
    pub geometry: Option<GeometrySummary>,
}

pub fn output_map(likelihood: Likelihood) -> OutputMap {
    match likelihood {
        Likelihood::BernoulliLogits => OutputMap::Sigmoid,
        Likelihood::GaussianFixedVariance => OutputMap::Clip,
    }
}

/// The two factors a geometry plot spans: the held-out pair if there is one, otherwise the
/// first two continuous varying factors.
pub fn geometry_factors(spec: &DatasetSpec) -> Result<[FactorName; 2]> {
    if let Holdout::CenterQuarter { factors } | Holdout::CornerQuarter { factors } = spec.holdout {
        return Ok(factors);
    }
    let cont: Vec<FactorName> = spec
        .varying_factors()
        .into_iter()
        .filter(|f| matches!(f.kind, FactorKind::Uniform { .. }))
        .map(|f| f.name)
        .collect();
    match cont[..] {
        [a, b, ..] => Ok([a, b]),
        _ => Err(Error::UndefinedMetric(
            "geometry needs two continuous varying factors".into(),
        )),
    }
}

pub fn geometry_embedding(vae: &Vae<f32>, spec: &DatasetSpec, grid_size: usize) -> Result<GeometryEmbedding> {
    let [f1, f2] = geometry_factors(spec)?;
    let grid = make_factor_grid(spec, f1, f2, grid_size)?;
    embed_factor_grid(&RenderingEncoder::new(vae, spec), &grid)
}

/// The run directory that holds `checkpoints/<file>`.
pub fn run_dir_of(checkpoint: &Path) -> Result<PathBuf> {
    checkpoint
        .parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .ok_or_else(|| domain!("checkpoint {} is not inside <run>/checkpoints/", checkpoint.display()))
}

pub fn load_config(run_dir: &Path) -> Result<RunConfig> {
    let p = run_dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    RunConfig::from_json(&text)
}

/// Loads a checkpoint and produces the requested artifacts under its run directory.
///
/// `dataset` overrides the run's dataset (for example a holdout variant); its image shape
/// must match the architecture.
pub fn evaluate(checkpoint: &Path, dataset: Option<&DatasetSpec>, what: EvalWhat) -> Result<Artifacts> {
    let dir = run_dir_of(checkpoint)?;
    let mut cfg = load_config(&dir)?;
    if let Some(d) = dataset {
        cfg.dataset = d.clone();
        cfg.validate()?;
    }
    let (vae, step) = load_vae(&cfg, checkpoint)?;
    evaluate_loaded(&vae, &cfg, step, &dir, what)
}

pub fn evaluate_loaded(vae: &Vae<f32>, cfg: &RunConfig, step: u64, dir: &Path, what: EvalWhat) -> Result<Artifacts> {
    let figures = dir.join("figures");
    let mut out = Artifacts::default();
    match what {
        EvalWhat::Metrics => {
            let entry = evaluate_model(vae, cfg, step)?;
            let path = dir.join(METRICS_FILE);
            upsert_metric_row(&path, &entry.metrics)?;
            out.files.push(path);
            out.metrics = Some(entry.metrics);
        }
        EvalWhat::Traversals => {
            let n = cfg.eval.traversal_seeds;
            if n == 0 {
                return Err(config_err!("eval.traversal_seeds is 0"));
            }
            let mut no_blank = cfg.dataset.clone();
            no_blank.blank_fraction = 0.0;
            let mut rng = stream(cfg.seed, &[TRAVERSAL_SEEDS]);
            let (seeds, _) = sample_batch(&no_blank, n, &mut rng);
            let (reference, _) = sample_batch(&no_blank, 256, &mut rng);
            let tc = TraversalConfig {
                steps: cfg.eval.traversal_steps,
                ..Default::default()
            };
            for i in 0..n {
                let grid = traverse(
                    vae,
                    &seeds.image(i),
                    Some(&reference),
                    &tc,
                    output_map(cfg.objective.likelihood),
                )?;
                let path = figures.join(format!("traversal{i}_{step}.png"));
                write_traversal_png(&grid, &path)?;
                out.files.push(path);
            }
        }
        EvalWhat::Geometry => {
            let e = geometry_embedding(vae, &cfg.dataset, cfg.eval.geometry_grid)?;
            let summary = GeometrySummary::of(&e);
            let csv = figures.join(format!("geometry_{step}.csv"));
            let png = figures.join(format!("geometry_{step}.png"));
            let json = figures.join(format!("geometry_{step}.json"));
            write_geometry_csv(&e, &csv)?;
            write_geometry_png(&e, &png, GEOMETRY_PLOT_SIZE)?;
            write_text(&json, &serde_json::to_string_pretty(&summary)?)?;
            out.files.extend([csv, png, json]);
            out.geometry = Some(summary);
        }
    }
    Ok(out)
}
