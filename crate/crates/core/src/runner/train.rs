use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dataset::sample_batch;
use crate::error::{config_err, Error, Result};
use crate::metrics::{
    discretized_mi, factorvae_metric, latents_used, mig, representation_table, FactorVaeMetricConfig,
    RenderingEncoder,
};
use crate::nn::{Adam, Checkpoint, Network, Tensor, Vae};
use crate::objectives::{
    build_discriminator, elbo_forward, elbo_loss, factorvae_losses, sample_noise, LossReport,
};
use crate::rng::stream;

/// Stream tags under the run seed.
const INIT: u64 = 0;
const STEP: u64 = 1;
const EVAL_DATA: u64 = 2;
const EVAL_METRICS: u64 = 3;
const DISC_INIT: u64 = 4;

pub const CONFIG_FILE: &str = "config.json";
pub const RECORD_FILE: &str = "record.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_CHECKPOINT: &str = "checkpoints/last.ckpt";
pub const BEST_CHECKPOINT: &str = "checkpoints/best.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    /// Stopped before the last step; resumable from the last checkpoint.
    Running,
    Completed,
    Diverged { step: u64, reason: String },
}

/// Training losses averaged over one logging interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub nll: f64,
    pub kl: f64,
    pub elbo_loss: f64,
    pub tc_penalty: Option<f64>,
    pub discriminator_loss: Option<f64>,
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub step: u64,
    pub mig: Option<f64>,
    pub factorvae_metric: Option<f64>,
    pub latents_used: Option<usize>,
    pub nll: f64,
    pub kl: f64,
    pub elbo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub step: u64,
    pub losses: LossReport,
    pub metrics: MetricRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub train_log: Vec<TrainLogRow>,
    pub evals: Vec<EvalEntry>,
    /// Checkpoint files relative to the run directory.
    pub checkpoints: Vec<String>,
    pub best_step: Option<u64>,
    pub best_checkpoint: Option<String>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn final_eval(&self) -> Option<&EvalEntry> {
        self.evals.last()
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(RECORD_FILE), &serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Parent of the run directories.
    pub runs_root: PathBuf,
    /// Continue from `checkpoints/last.ckpt` when it exists.
    pub resume: bool,
    /// Stop (status `running`) after this step, as if the process were killed.
    pub halt_after: Option<u64>,
}

impl TrainOptions {
    pub fn new(runs_root: impl Into<PathBuf>) -> Self {
        TrainOptions {
            runs_root: runs_root.into(),
            ..Default::default()
        }
    }
}

pub fn run_dir(root: &Path, run_id: &str) -> PathBuf {
    root.join(run_id)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The VAE, its optimizer and, for FactorVAE, the discriminator pair.
pub struct Model {
    pub vae: Vae<f32>,
    pub adam: Adam<f32>,
    pub discriminator: Option<(Network<f32>, Adam<f32>)>,
}

fn adam_for(params: Vec<&Tensor<f32>>, config: crate::nn::AdamConfig) -> Adam<f32> {
    Adam::new(config, &params)
}

impl Model {
    pub fn init(cfg: &RunConfig) -> Result<Self> {
        let vae = Vae::<f32>::new(&cfg.architecture, &mut stream(cfg.seed, &[INIT]))?;
        let adam = adam_for(
            vae.named_params().into_iter().map(|(_, t)| t).collect(),
            cfg.optimizer.adam(cfg.lr()),
        );
        let discriminator = cfg.objective.factorvae.as_ref().map(|fv| {
            let net = build_discriminator::<f32, _>(
                cfg.architecture.latent_dim,
                &fv.discriminator,
                &mut stream(cfg.seed, &[DISC_INIT]),
            );
            let adam = adam_for(net.params(), cfg.optimizer.adam(fv.discriminator_lr));
            (net, adam)
        });
        Ok(Model {
            vae,
            adam,
            discriminator,
        })
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint {
            step,
            ..Default::default()
        };
        for (name, t) in self.vae.named_params() {
            ck.push(format!("vae.{name}"), t.clone());
        }
        if let Some(perm) = &self.vae.coord_permutation {
            ck.push(
                "vae.coord_permutation",
                Tensor::from_vec(&[perm.len()], perm.iter().map(|&p| p as f32).collect()),
            );
        }
        push_moments(&mut ck, "adam", &self.adam);
        if let Some((net, adam)) = &self.discriminator {
            for (name, t) in net.named_params() {
                ck.push(format!("disc.{name}"), t.clone());
            }
            push_moments(&mut ck, "disc_adam", adam);
        }
        ck
    }

    /// Loads parameters (and optimizer state when present) from a checkpoint.
    pub fn restore(&mut self, ck: &Checkpoint, with_optimizer: bool) -> Result<()> {
        let names: Vec<String> = self.vae.named_params().into_iter().map(|(n, _)| n).collect();
        ck.restore("vae.", names.into_iter().zip(self.vae.params_mut()).collect())?;
        if self.vae.coord_permutation.is_some() {
            let saved = ck.get("vae.coord_permutation").ok_or_else(|| Error::CheckpointMismatch {
                tensor: "vae.coord_permutation".into(),
                detail: "missing from checkpoint".into(),
            })?;
            let perm = saved.data().iter().map(|&v| v as usize).collect();
            self.vae
                .set_coord_permutation(perm)
                .map_err(|e| Error::CheckpointMismatch {
                    tensor: "vae.coord_permutation".into(),
                    detail: e.to_string(),
                })?;
        }
        if with_optimizer {
            restore_moments(ck, "adam", &mut self.adam)?;
        }
        if let Some((net, adam)) = &mut self.discriminator {
            let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
            ck.restore("disc.", names.into_iter().zip(net.params_mut()).collect())?;
            if with_optimizer {
                restore_moments(ck, "disc_adam", adam)?;
            }
        }
        if with_optimizer {
            self.adam.step = ck.step;
            if let Some((_, a)) = &mut self.discriminator {
                a.step = ck.step;
            }
        }
        Ok(())
    }
}

fn push_moments(ck: &mut Checkpoint, prefix: &str, adam: &Adam<f32>) {
    for (i, (m, v)) in adam.first_moment.iter().zip(&adam.second_moment).enumerate() {
        ck.push(format!("{prefix}.m.{i}"), m.clone());
        ck.push(format!("{prefix}.v.{i}"), v.clone());
    }
}

fn restore_moments(ck: &Checkpoint, prefix: &str, adam: &mut Adam<f32>) -> Result<()> {
    let m = adam
        .first_moment
        .iter_mut()
        .enumerate()
        .map(|(i, t)| (format!("m.{i}"), t))
        .collect();
    ck.restore(&format!("{prefix}."), m)?;
    let v = adam
        .second_moment
        .iter_mut()
        .enumerate()
        .map(|(i, t)| (format!("v.{i}"), t))
        .collect();
    ck.restore(&format!("{prefix}."), v)
}

/// Evaluation losses (fixed batch and noise per run) and metric snapshot at `step`.
pub fn evaluate_model(vae: &Vae<f32>, cfg: &RunConfig, step: u64) -> Result<EvalEntry> {
    let e = &cfg.eval;
    let mut data_rng = stream(cfg.seed, &[EVAL_DATA]);
    let (batch, _) = sample_batch(&cfg.dataset, e.loss_batch.max(1), &mut data_rng);
    let images = batch.images();
    let (mut nll, mut kl) = (0.0, 0.0);
    for chunk in images.chunks(64) {
        let x = crate::images::ImageBatch::from_images(chunk).to_tensor::<f32>();
        let noise = sample_noise(vae.latent_dim(), chunk.len(), &mut data_rng);
        let pass = elbo_forward(vae, &x, noise, &cfg.objective);
        nll += pass.nll.iter().sum::<f64>();
        kl += pass.kl.iter().sum::<f64>();
    }
    let n = images.len() as f64;
    let losses = LossReport {
        nll: nll / n,
        kl: kl / n,
        elbo_loss: (nll + cfg.objective.beta * kl) / n,
        ..Default::default()
    };

    let mut rng = stream(cfg.seed, &[EVAL_METRICS, step]);
    let encoder = RenderingEncoder::new(vae, &cfg.dataset);
    let (mut mig_value, mut used) = (None, None);
    if e.metric_samples > 0 && losses.is_finite() {
        let table = representation_table(&encoder, &cfg.dataset, e.metric_samples, &mut rng)?;
        used = Some(latents_used(&table.latent_stds));
        mig_value = match discretized_mi(&table, e.mi_bins).and_then(|m| mig(&m)) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(msg)) => {
                log::warn!("{}: MIG undefined at step {step}: {msg}", cfg.run_id);
                None
            }
            Err(other) => return Err(other),
        };
    }
    let mut fv = None;
    if e.factorvae_votes > 0 && cfg.dataset.varying_factors().len() >= 2 && losses.is_finite() {
        let mc = FactorVaeMetricConfig {
            votes: e.factorvae_votes,
            scale_samples: e.metric_samples.max(1000),
            ..Default::default()
        };
        fv = Some(factorvae_metric(&encoder, &cfg.dataset, &mc, &mut rng)?.accuracy);
    }
    Ok(EvalEntry {
        step,
        metrics: MetricRow {
            run_id: cfg.run_id.clone(),
            step,
            mig: mig_value,
            factorvae_metric: fv,
            latents_used: used,
            nll: losses.nll,
            kl: losses.kl,
            elbo: losses.elbo_loss,
        },
        losses,
    })
}

/// Inserts `row`, replacing any existing row with the same `(run_id, step)`.
pub fn upsert_metric_row(path: &Path, row: &MetricRow) -> Result<()> {
    let mut rows: Vec<MetricRow> = if path.exists() {
        crate::analysis::read_csv(path)?
    } else {
        Vec::new()
    };
    rows.retain(|r| !(r.run_id == row.run_id && r.step == row.step));
    rows.push(row.clone());
    rows.sort_by(|a, b| a.run_id.cmp(&b.run_id).then(a.step.cmp(&b.step)));
    crate::analysis::write_csv(&rows, path)
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    nll: f64,
    kl: f64,
    elbo: f64,
    tc: f64,
    disc: f64,
}

impl Accumulator {
    fn add(&mut self, r: &LossReport, disc: Option<f64>) {
        self.count += 1;
        self.nll += r.nll;
        self.kl += r.kl;
        self.elbo += r.elbo_loss;
        self.tc += r.tc_penalty.unwrap_or(0.0);
        self.disc += disc.unwrap_or(0.0);
    }

    fn take(&mut self, step: u64, adversarial: bool) -> TrainLogRow {
        let n = self.count.max(1) as f64;
        let row = TrainLogRow {
            step,
            nll: self.nll / n,
            kl: self.kl / n,
            elbo_loss: self.elbo / n,
            tc_penalty: adversarial.then_some(self.tc / n),
            discriminator_loss: adversarial.then_some(self.disc / n),
        };
        *self = Accumulator::default();
        row
    }
}

struct StepOutcome {
    report: LossReport,
    discriminator_loss: Option<f64>,
}

fn optimization_step(model: &mut Model, cfg: &RunConfig, step: u64) -> Result<StepOutcome> {
    let mut rng = stream(cfg.seed, &[STEP, step]);
    let (batch, _) = sample_batch(&cfg.dataset, cfg.batch(), &mut rng);
    let x = batch.to_tensor::<f32>();
    match &mut model.discriminator {
        None => {
            let s = elbo_loss(&model.vae, &x, &cfg.objective, &mut rng)?;
            model.adam.update(model.vae.params_mut(), &s.grads);
            Ok(StepOutcome {
                report: s.report,
                discriminator_loss: None,
            })
        }
        Some((disc, disc_adam)) => {
            let (batch2, _) = sample_batch(&cfg.dataset, cfg.batch(), &mut rng);
            let x2 = batch2.to_tensor::<f32>();
            let s = factorvae_losses(&model.vae, disc, &x, &x2, &cfg.objective, &mut rng)?;
            model.adam.update(model.vae.params_mut(), &s.vae_grads);
            disc_adam.update(disc.params_mut(), &s.discriminator_grads);
            Ok(StepOutcome {
                report: s.report,
                discriminator_loss: Some(s.discriminator_loss),
            })
        }
    }
}

fn model_finite(model: &Model) -> bool {
    model.vae.all_finite()
        && model
            .discriminator
            .as_ref()
            .is_none_or(|(d, _)| d.params().iter().all(|t| t.all_finite()))
}

fn fresh_record(cfg: &RunConfig) -> RunRecord {
    RunRecord {
        run_id: cfg.run_id.clone(),
        config: cfg.clone(),
        train_log: Vec::new(),
        evals: Vec::new(),
        checkpoints: Vec::new(),
        best_step: None,
        best_checkpoint: None,
        status: RunStatus::Running,
    }
}

fn clear_run_dir(dir: &Path) -> Result<()> {
    for f in [RECORD_FILE, METRICS_FILE, LAST_CHECKPOINT, BEST_CHECKPOINT] {
        let p = dir.join(f);
        if p.exists() {
            log::warn!("removing stale {}", p.display());
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// Trains one run under `options.runs_root/<run_id>`.
///
/// A non-finite loss or parameter ends the run with status `diverged`; the partial record
/// is still written and returned.
pub fn train(config: &RunConfig, options: &TrainOptions) -> Result<RunRecord> {
    config.validate()?;
    if config.sweep.is_some() {
        return Err(config_err!("config has a sweep block; run it with `sweep`"));
    }
    let cfg = config.resolved();
    let dir = run_dir(&options.runs_root, &cfg.run_id);
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(&dir, e))?;
    fs::create_dir_all(dir.join("figures")).map_err(|e| Error::io(&dir, e))?;

    let mut model = Model::init(&cfg)?;
    let mut record = fresh_record(&cfg);
    let mut start = 0;
    let last_path = dir.join(LAST_CHECKPOINT);
    if options.resume && last_path.exists() {
        let prev = RunRecord::read(&dir.join(RECORD_FILE))?;
        if prev.config != cfg {
            return Err(config_err!(
                "cannot resume {}: config differs from the recorded one",
                dir.display()
            ));
        }
        let ck = Checkpoint::read(&last_path)?;
        model.restore(&ck, true)?;
        start = ck.step;
        record = prev;
        record.train_log.retain(|r| r.step <= start);
        record.evals.retain(|r| r.step <= start);
        record.status = RunStatus::Running;
        log::info!("{}: resuming from step {start}", cfg.run_id);
    } else {
        clear_run_dir(&dir)?;
    }
    let config_text = serde_json::to_string_pretty(&cfg)?;
    write_text(&dir.join(CONFIG_FILE), &config_text)?;

    let adversarial = model.discriminator.is_some();
    let mut acc = Accumulator::default();
    for step in start + 1..=cfg.steps {
        let outcome = match optimization_step(&mut model, &cfg, step) {
            Ok(o) if model_finite(&model) => o,
            Ok(_) => return diverge(record, &dir, step, "non-finite parameters after update".into()),
            Err(Error::Diverged { reason, .. }) => return diverge(record, &dir, step, reason),
            Err(Error::Domain(msg)) if msg.contains("non-finite") => return diverge(record, &dir, step, msg),
            Err(e) => return Err(e),
        };
        acc.add(&outcome.report, outcome.discriminator_loss);
        if step % cfg.log_every == 0 || step == cfg.steps {
            record.train_log.push(acc.take(step, adversarial));
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let entry = evaluate_model(&model.vae, &cfg, step)?;
            log::info!(
                "{} step {step}: nll {:.3} kl {:.3} elbo {:.3} mig {:?}",
                cfg.run_id,
                entry.losses.nll,
                entry.losses.kl,
                entry.losses.elbo_loss,
                entry.metrics.mig
            );
            if !entry.losses.is_finite() {
                return diverge(record, &dir, step, "non-finite evaluation loss".into());
            }
            save_checkpoints(&mut record, &model, &dir, &entry)?;
            upsert_metric_row(&dir.join(METRICS_FILE), &entry.metrics)?;
            record.evals.push(entry);
            record.write(&dir)?;
        }
        if options.halt_after == Some(step) && step < cfg.steps {
            record.write(&dir)?;
            return Ok(record);
        }
    }
    record.status = RunStatus::Completed;
    record.write(&dir)?;
    Ok(record)
}

fn diverge(mut record: RunRecord, dir: &Path, step: u64, reason: String) -> Result<RunRecord> {
    log::warn!("{} diverged at step {step}: {reason}", record.run_id);
    record.status = RunStatus::Diverged { step, reason };
    record.write(dir)?;
    Ok(record)
}

/// Writes `last.ckpt`; the best-ELBO state lives in `last.ckpt` until a worse evaluation
/// would overwrite it, at which point it is moved to `best.ckpt`.
fn save_checkpoints(record: &mut RunRecord, model: &Model, dir: &Path, entry: &EvalEntry) -> Result<()> {
    let best_elbo = record
        .best_step
        .and_then(|s| record.evals.iter().find(|e| e.step == s))
        .map(|e| e.losses.elbo_loss);
    let is_best = best_elbo.is_none_or(|b| entry.losses.elbo_loss < b);
    let last = dir.join(LAST_CHECKPOINT);
    let best = dir.join(BEST_CHECKPOINT);
    let best_in_last = record.best_checkpoint.as_deref() == Some(LAST_CHECKPOINT);
    if best_in_last && !is_best {
        fs::rename(&last, &best).map_err(|e| Error::io(&best, e))?;
    }
    model.to_checkpoint(entry.step).write(&last)?;
    if is_best {
        if best.exists() {
            fs::remove_file(&best).map_err(|e| Error::io(&best, e))?;
        }
        record.best_step = Some(entry.step);
        record.best_checkpoint = Some(LAST_CHECKPOINT.into());
    } else if best_in_last {
        record.best_checkpoint = Some(BEST_CHECKPOINT.into());
    }
    record.checkpoints = vec![LAST_CHECKPOINT.to_string()];
    if record.best_checkpoint.as_deref() == Some(BEST_CHECKPOINT) {
        record.checkpoints.push(BEST_CHECKPOINT.into());
    }
    Ok(())
}

/// Rebuilds a trained VAE from a run config and checkpoint file.
pub fn load_vae(cfg: &RunConfig, checkpoint: &Path) -> Result<(Vae<f32>, u64)> {
    let ck = Checkpoint::read(checkpoint)?;
    let mut model = Model::init(&cfg.resolved())?;
    model.restore(&ck, false)?;
    Ok((model.vae, ck.step))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::{BroadcastSpec, DecoderSpec, EncoderSpec};
    use crate::runner::config::preset;

    pub(crate) fn tiny(run_id: &str) -> RunConfig {
        let mut c = preset("desk-xy").unwrap();
        c.run_id = run_id.into();
        c.dataset.image_size = 16;
        c.architecture.image_size = 16;
        c.architecture.latent_dim = 3;
        c.architecture.encoder = EncoderSpec::uniform(4, 16);
        c.architecture.decoder = DecoderSpec::Broadcast(BroadcastSpec {
            channels: 4,
            conv_depth: 2,
            ..Default::default()
        });
        c.batch_size = Some(4);
        c.steps = 20;
        c.eval_every = 5;
        c.log_every = 5;
        c.eval.loss_batch = 16;
        c.eval.metric_samples = 400;
        c.eval.factorvae_votes = 10;
        c
    }

    #[test]
    fn one_step_run_makes_one_update_and_one_checkpoint() {
        let root = tempfile::tempdir().unwrap();
        let mut c = tiny("one");
        c.steps = 1;
        let rec = train(&c, &TrainOptions::new(root.path())).unwrap();
        assert_eq!(rec.status, RunStatus::Completed);
        assert_eq!(rec.checkpoints, vec![LAST_CHECKPOINT.to_string()]);
        assert_eq!(rec.evals.len(), 1);
        let files: Vec<_> = fs::read_dir(root.path().join("one/checkpoints")).unwrap().collect();
        assert_eq!(files.len(), 1);
        let ck = Checkpoint::read(&root.path().join("one").join(LAST_CHECKPOINT)).unwrap();
        assert_eq!(ck.step, 1);
        let init = Model::init(&c.resolved()).unwrap();
        let (trained, _) = load_vae(&c, &root.path().join("one").join(LAST_CHECKPOINT)).unwrap();
        let moved = init
            .vae
            .named_params()
            .iter()
            .zip(trained.named_params())
            .filter(|((_, a), (_, b))| a.data() != b.data())
            .count();
        assert!(moved > 0);
        let mut zero = c.clone();
        zero.steps = 0;
        assert!(matches!(train(&zero, &TrainOptions::new(root.path())), Err(Error::Config(_))));
    }

    #[test]
    fn config_snapshot_is_the_resolved_input() {
        let root = tempfile::tempdir().unwrap();
        let mut c = tiny("snap");
        c.steps = 2;
        c.optimizer.lr = None;
        train(&c, &TrainOptions::new(root.path())).unwrap();
        let text = fs::read_to_string(root.path().join("snap").join(CONFIG_FILE)).unwrap();
        assert_eq!(text, serde_json::to_string_pretty(&c.resolved()).unwrap());
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back.optimizer.lr, Some(3e-4));
    }

    #[test]
    fn identical_seeds_give_identical_records_and_resume_replays() {
        let a_root = tempfile::tempdir().unwrap();
        let b_root = tempfile::tempdir().unwrap();
        let c = tiny("det");
        let a = train(&c, &TrainOptions::new(a_root.path())).unwrap();
        let again = train(&c, &TrainOptions::new(b_root.path())).unwrap();
        assert_eq!(a, again);
        assert_eq!(a.evals.len(), 4);

        let resume_root = tempfile::tempdir().unwrap();
        let mut opts = TrainOptions::new(resume_root.path());
        opts.halt_after = Some(12);
        let halted = train(&c, &opts).unwrap();
        assert_eq!(halted.status, RunStatus::Running);
        assert_eq!(halted.evals.len(), 2);
        opts.halt_after = None;
        opts.resume = true;
        let resumed = train(&c, &opts).unwrap();
        assert_eq!(resumed.status, RunStatus::Completed);
        assert_eq!(resumed.evals, a.evals);
        let rows: Vec<MetricRow> =
            crate::analysis::read_csv(&resume_root.path().join("det").join(METRICS_FILE)).unwrap();
        assert_eq!(rows, a.evals.iter().map(|e| e.metrics.clone()).collect::<Vec<_>>());

        let mut other = c.clone();
        other.seed = 1;
        let d = train(&other, &TrainOptions::new(tempfile::tempdir().unwrap().path())).unwrap();
        assert_ne!(d.evals, a.evals);
    }

    #[test]
    fn metrics_rows_are_idempotent_per_run_and_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(METRICS_FILE);
        let row = |step, nll| MetricRow {
            run_id: "r".into(),
            step,
            mig: Some(0.5),
            factorvae_metric: None,
            latents_used: Some(2),
            nll,
            kl: 1.0,
            elbo: nll + 1.0,
        };
        upsert_metric_row(&p, &row(10, 3.0)).unwrap();
        upsert_metric_row(&p, &row(5, 4.0)).unwrap();
        upsert_metric_row(&p, &row(10, 3.0)).unwrap();
        upsert_metric_row(&p, &row(10, 2.0)).unwrap();
        let rows: Vec<MetricRow> = crate::analysis::read_csv(&p).unwrap();
        assert_eq!(rows, vec![row(5, 4.0), row(10, 2.0)]);
        let header = fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("run_id,step,mig,factorvae_metric,latents_used,nll,kl,elbo\n"));
    }

    #[test]
    fn divergence_is_recorded_not_raised() {
        let root = tempfile::tempdir().unwrap();
        let mut c = tiny("boom");
        c.optimizer.lr = Some(1e30);
        c.steps = 50;
        c.eval_every = 50;
        let rec = train(&c, &TrainOptions::new(root.path())).unwrap();
        let RunStatus::Diverged { step, .. } = rec.status else {
            panic!("expected divergence, got {:?}", rec.status)
        };
        assert!(step >= 1 && step <= 50);
        let saved = RunRecord::read(&root.path().join("boom").join(RECORD_FILE)).unwrap();
        assert_eq!(saved.status, rec.status);
    }

    #[test]
    fn factorvae_runs_train_both_networks_and_resume() {
        let root = tempfile::tempdir().unwrap();
        let mut c = tiny("fv");
        c.objective = crate::objectives::ObjectiveSpec::factorvae();
        let fv = c.objective.factorvae.as_mut().unwrap();
        fv.discriminator.hidden_layers = 2;
        fv.discriminator.width = 16;
        c.batch_size = None;
        c.steps = 10;
        let full = train(&c, &TrainOptions::new(root.path())).unwrap();
        assert_eq!(full.status, RunStatus::Completed);
        assert!(full.train_log.iter().all(|r| r.tc_penalty.is_some() && r.discriminator_loss.is_some()));
        assert_eq!(full.config.batch_size, Some(32));

        let r2 = tempfile::tempdir().unwrap();
        let mut opts = TrainOptions::new(r2.path());
        opts.halt_after = Some(7);
        train(&c, &opts).unwrap();
        opts.halt_after = None;
        opts.resume = true;
        assert_eq!(train(&c, &opts).unwrap().evals, full.evals);
    }

    #[test]
    fn best_checkpoint_is_kept_apart_from_last() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("checkpoints")).unwrap();
        let c = tiny("ck");
        let model = Model::init(&c.resolved()).unwrap();
        let mut rec = fresh_record(&c);
        let entry = |step, elbo| EvalEntry {
            step,
            losses: LossReport {
                elbo_loss: elbo,
                ..Default::default()
            },
            metrics: MetricRow {
                run_id: "ck".into(),
                step,
                mig: None,
                factorvae_metric: None,
                latents_used: None,
                nll: 0.0,
                kl: 0.0,
                elbo,
            },
        };
        for (step, elbo) in [(1, 5.0), (2, 4.0), (3, 6.0), (4, 7.0), (5, 3.0)] {
            let e = entry(step, elbo);
            save_checkpoints(&mut rec, &model, dir.path(), &e).unwrap();
            rec.evals.push(e);
            let best = Checkpoint::read(&dir.path().join(rec.best_checkpoint.as_ref().unwrap())).unwrap();
            assert_eq!(Some(best.step), rec.best_step);
            if step == 3 || step == 4 {
                assert_eq!(rec.best_step, Some(2));
                assert_eq!(rec.checkpoints.len(), 2);
            }
        }
        assert_eq!(rec.best_step, Some(5));
        assert_eq!(rec.checkpoints, vec![LAST_CHECKPOINT.to_string()]);
        assert!(!dir.path().join(BEST_CHECKPOINT).exists());
    }

    #[test]
    fn mismatched_checkpoint_names_the_tensor() {
        let root = tempfile::tempdir().unwrap();
        let mut c = tiny("mm");
        c.steps = 1;
        train(&c, &TrainOptions::new(root.path())).unwrap();
        let mut wider = c.clone();
        wider.architecture.encoder = EncoderSpec::uniform(5, 16);
        let err = load_vae(&wider, &root.path().join("mm").join(LAST_CHECKPOINT)).unwrap_err();
        match err {
            Error::CheckpointMismatch { tensor, .. } => assert!(tensor.starts_with("vae.encoder"), "{tensor}"),
            other => panic!("{other}"),
        }
    }
}
