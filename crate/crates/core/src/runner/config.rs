use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{CirclesDataset, DatasetSpec, FactorName, Holdout};
use crate::error::{config_err, Result};
use crate::nn::{AdamConfig, ArchitectureSpec, BroadcastSpec, DecoderSpec, DeconvSpec, EncoderSpec};
use crate::objectives::ObjectiveSpec;

pub const DEFAULT_LR: f64 = 3e-4;
pub const FACTORVAE_LR: f64 = 1e-4;
pub const DEFAULT_BATCH: usize = 16;
pub const FACTORVAE_BATCH: usize = 32;

/// Full-scale step counts.
pub const SPRITES_STEPS: u64 = 1_500_000;
pub const CIRCLES_STEPS: u64 = 500_000;

fn default_adam() -> String {
    "adam".into()
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_adam")]
    pub name: String,
    /// Filled in by [`RunConfig::resolved`] when absent.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            name: default_adam(),
            lr: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// What is computed at every evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Images in the fixed batch on which evaluation losses are measured.
    pub loss_batch: usize,
    /// Configurations encoded for MIG and latents-used; 0 skips them.
    pub metric_samples: usize,
    pub mi_bins: usize,
    /// FactorVAE-metric votes; 0 skips the metric.
    pub factorvae_votes: usize,
    pub geometry_grid: usize,
    pub traversal_seeds: usize,
    pub traversal_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            loss_batch: 256,
            metric_samples: 10_000,
            mi_bins: crate::metrics::DEFAULT_BINS,
            factorvae_votes: 800,
            geometry_grid: 16,
            traversal_seeds: 1,
            traversal_steps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted path into the run config, or one of the short names
    /// `beta`, `conv_depth`, `pre_mlp_depth`, `upscale_count`, `family`.
    pub parameter: String,
    pub values: Vec<Value>,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

fn default_run_id() -> String {
    "run".into()
}
fn default_eval_every() -> u64 {
    5000
}
fn default_log_every() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub dataset: DatasetSpec,
    pub architecture: ArchitectureSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Interval over which training losses are averaged into the record.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn is_factorvae(&self) -> bool {
        self.objective.factorvae.is_some()
    }

    pub fn lr(&self) -> f64 {
        self.optimizer
            .lr
            .unwrap_or(if self.is_factorvae() { FACTORVAE_LR } else { DEFAULT_LR })
    }

    pub fn batch(&self) -> usize {
        self.batch_size
            .unwrap_or(if self.is_factorvae() { FACTORVAE_BATCH } else { DEFAULT_BATCH })
    }

    /// The config with learning rate and batch size made explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.optimizer.lr = Some(self.lr());
        c.batch_size = Some(self.batch());
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(config_err!("steps must be positive"));
        }
        if self.eval_every == 0 || self.log_every == 0 {
            return Err(config_err!("eval_every and log_every must be positive"));
        }
        if self.optimizer.name != "adam" {
            return Err(config_err!("unsupported optimizer `{}` (only adam)", self.optimizer.name));
        }
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(config_err!("learning rate must be positive, got {lr}"));
        }
        let min_batch = if self.is_factorvae() { 2 } else { 1 };
        if self.batch() < min_batch {
            return Err(config_err!("batch_size must be at least {min_batch}"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(config_err!("run_id `{}` is not a valid directory name", self.run_id));
        }
        self.dataset.validate()?;
        self.architecture.validate()?;
        self.objective.validate()?;
        let a = &self.architecture;
        if a.image_size != self.dataset.image_size || a.channels != self.dataset.channels {
            return Err(config_err!(
                "architecture expects {}x{}x{} images, dataset renders {}x{}x{}",
                a.image_size,
                a.image_size,
                a.channels,
                self.dataset.image_size,
                self.dataset.image_size,
                self.dataset.channels
            ));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.replicas == 0 {
                return Err(config_err!("a sweep needs at least one value and one replica"));
            }
        }
        Ok(())
    }

    /// Expands the sweep block into one config per (value, replica), in that order.
    ///
    /// Every derived config is validated before any is returned.
    pub fn expand_sweep(&self) -> Result<Vec<SweepPoint>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| config_err!("config has no sweep block"))?;
        let mut base = self.clone();
        base.sweep = None;
        let path = canonical_path(&sweep.parameter);
        let mut out = Vec::new();
        for (vi, value) in sweep.values.iter().enumerate() {
            let mut json = serde_json::to_value(&base)?;
            set_path(&mut json, &path, value.clone())?;
            let cfg: RunConfig = serde_json::from_value(json)
                .map_err(|e| config_err!("sweep value {value} for `{}`: {e}", sweep.parameter))?;
            cfg.validate()
                .map_err(|e| config_err!("sweep value {value} for `{}`: {e}", sweep.parameter))?;
            for r in 0..sweep.replicas {
                let mut c = cfg.clone();
                c.seed = crate::rng::derive_seed(self.seed, &[vi as u64, r as u64]);
                c.run_id = format!("{}-{}{}-r{r}", self.run_id, short_name(&path), value_label(value));
                out.push(SweepPoint {
                    value_index: vi,
                    replica: r,
                    value: value.clone(),
                    config: c,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value_index: usize,
    pub replica: usize,
    pub value: Value,
    pub config: RunConfig,
}

fn canonical_path(p: &str) -> String {
    match p {
        "beta" => "objective.beta".into(),
        "conv_depth" | "pre_mlp_depth" | "upscale_count" | "shuffle_coords" | "family" => {
            format!("architecture.decoder.{p}")
        }
        _ => p.to_string(),
    }
}

fn short_name(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Replaces the value at a dotted path. The key must already exist, except for the decoder
/// family, which swaps in a decoder of that family keeping `channels` and `kernel`.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    if path == "architecture.decoder.family" {
        let dec = root
            .pointer_mut("/architecture/decoder")
            .and_then(Value::as_object_mut)
            .ok_or_else(|| config_err!("config has no decoder"))?;
        let mut fresh = serde_json::Map::new();
        fresh.insert("family".into(), value);
        for key in ["channels", "kernel"] {
            if let Some(v) = dec.get(key) {
                fresh.insert(key.into(), v.clone());
            }
        }
        *dec = fresh;
        return Ok(());
    }
    if matches!(path, "seed" | "run_id" | "sweep") || path.starts_with("sweep.") {
        return Err(config_err!("`{path}` cannot be swept"));
    }
    let pointer = format!("/{}", path.replace('.', "/"));
    let slot = root
        .pointer_mut(&pointer)
        .ok_or_else(|| config_err!("unknown sweep parameter path `{path}`"))?;
    if slot.is_object() || slot.is_array() {
        return Err(config_err!("sweep parameter `{path}` is not a scalar field"));
    }
    *slot = value;
    Ok(())
}

/// Merges `patch` into `base`: objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

pub const PRESETS: &[&str] = &[
    "desk-xy",
    "desk-xy-deconv",
    "desk-xy-holdout",
    "desk-xy-holdout-deconv",
    "desk-xy-shuffled",
    "desk-xy-upscale3",
    "desk-xy-beta-sweep",
    "full-sprites",
    "full-circles-xy",
];

/// Desk-scale image size, latent size, encoder width, decoder width and step count.
pub const DESK_IMAGE: usize = 32;
pub const DESK_LATENTS: usize = 6;
pub const DESK_ENCODER_CHANNELS: usize = 32;
pub const DESK_DECODER_CHANNELS: usize = 16;
pub const DESK_STEPS: u64 = 3000;
pub const DESK_LR: f64 = 1e-3;

fn desk_xy() -> RunConfig {
    let mut dataset = DatasetSpec::circles(CirclesDataset::XY, DESK_IMAGE);
    dataset.channels = 1;
    RunConfig {
        run_id: "desk-xy".into(),
        architecture: ArchitectureSpec {
            latent_dim: DESK_LATENTS,
            image_size: DESK_IMAGE,
            channels: 1,
            encoder: EncoderSpec::uniform(DESK_ENCODER_CHANNELS, 128),
            decoder: DecoderSpec::Broadcast(BroadcastSpec {
                channels: DESK_DECODER_CHANNELS,
                ..Default::default()
            }),
        },
        dataset,
        objective: ObjectiveSpec::default(),
        optimizer: OptimizerConfig {
            lr: Some(DESK_LR),
            ..Default::default()
        },
        batch_size: None,
        steps: DESK_STEPS,
        seed: 0,
        eval_every: DESK_STEPS,
        log_every: 100,
        eval: EvalConfig {
            metric_samples: 5000,
            factorvae_votes: 200,
            ..Default::default()
        },
        sweep: None,
    }
}

fn desk_deconv(mut c: RunConfig) -> RunConfig {
    c.architecture.decoder = DecoderSpec::Deconv(DeconvSpec {
        mlp_widths: vec![128],
        deconv_depth: 4,
        channels: DESK_ENCODER_CHANNELS,
        ..Default::default()
    });
    c
}

fn holdout(mut c: RunConfig) -> RunConfig {
    c.dataset.holdout = Holdout::CenterQuarter {
        factors: [FactorName::X, FactorName::Y],
    };
    c
}

fn with_broadcast(mut c: RunConfig, f: impl FnOnce(&mut BroadcastSpec)) -> RunConfig {
    if let DecoderSpec::Broadcast(b) = &mut c.architecture.decoder {
        f(b);
    }
    c
}

/// Built-in configs selected with `--preset`.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut c = match name {
        "desk-xy" => desk_xy(),
        "desk-xy-deconv" => desk_deconv(desk_xy()),
        "desk-xy-holdout" => holdout(desk_xy()),
        "desk-xy-holdout-deconv" => holdout(desk_deconv(desk_xy())),
        "desk-xy-shuffled" => with_broadcast(desk_xy(), |b| b.shuffle_coords = true),
        "desk-xy-upscale3" => with_broadcast(desk_xy(), |b| b.upscale_count = 3),
        "desk-xy-beta-sweep" => {
            let mut c = desk_xy();
            c.sweep = Some(SweepSpec {
                parameter: "beta".into(),
                values: [0.5, 1.0, 2.0, 4.0].iter().map(|&b| Value::from(b)).collect(),
                replicas: 3,
            });
            c
        }
        "full-sprites" => RunConfig {
            run_id: "full-sprites".into(),
            dataset: DatasetSpec::colored_sprites(64),
            architecture: ArchitectureSpec::broadcast_default(3),
            objective: ObjectiveSpec::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: None,
            steps: SPRITES_STEPS,
            seed: 0,
            eval_every: default_eval_every(),
            log_every: default_log_every(),
            eval: EvalConfig::default(),
            sweep: None,
        },
        "full-circles-xy" => RunConfig {
            run_id: "full-circles-xy".into(),
            dataset: DatasetSpec::circles(CirclesDataset::XY, 64),
            architecture: ArchitectureSpec::broadcast_default(3),
            objective: ObjectiveSpec::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: None,
            steps: CIRCLES_STEPS,
            seed: 0,
            eval_every: default_eval_every(),
            log_every: default_log_every(),
            eval: EvalConfig::default(),
            sweep: None,
        },
        other => {
            return Err(config_err!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            ))
        }
    };
    c.run_id = name.to_string();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid_and_named_after_itself() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.run_id, *name);
            let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
        }
        assert!(preset("nope").is_err());
        let d = preset("desk-xy").unwrap();
        assert!(d.steps <= 50_000);
        assert_eq!((d.dataset.image_size, d.architecture.latent_dim), (32, 6));
        assert_eq!(preset("full-sprites").unwrap().steps, 1_500_000);
        assert_eq!(preset("full-circles-xy").unwrap().steps, 500_000);
    }

    #[test]
    fn defaults_resolve_by_objective() {
        let mut c = preset("desk-xy").unwrap();
        c.optimizer.lr = None;
        let r = c.resolved();
        assert_eq!((r.optimizer.lr, r.batch_size), (Some(3e-4), Some(16)));
        c.objective = ObjectiveSpec::factorvae();
        let r = c.resolved();
        assert_eq!((r.optimizer.lr, r.batch_size), (Some(1e-4), Some(32)));
        assert_eq!(r.objective.factorvae.unwrap().discriminator_lr, 2e-5);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = preset("desk-xy").unwrap();
        c.steps = 0;
        assert!(c.validate().is_err());
        let mut c = preset("desk-xy").unwrap();
        c.dataset.channels = 3;
        assert!(c.validate().is_err());
        let mut c = preset("desk-xy").unwrap();
        c.optimizer.name = "sgd".into();
        assert!(c.validate().is_err());
        let mut json = serde_json::to_value(preset("desk-xy").unwrap()).unwrap();
        json["stepz"] = Value::from(3);
        assert!(serde_json::from_value::<RunConfig>(json).is_err());
    }

    #[test]
    fn sweep_expands_values_times_replicas_with_distinct_seeds() {
        let c = preset("desk-xy-beta-sweep").unwrap();
        let pts = c.expand_sweep().unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[3].config.objective.beta, 1.0);
        assert_eq!(pts[3].replica, 0);
        let seeds: std::collections::HashSet<u64> = pts.iter().map(|p| p.config.seed).collect();
        assert_eq!(seeds.len(), 12);
        assert_eq!(pts[4].config.seed, crate::rng::derive_seed(c.seed, &[1, 1]));
        let ids: std::collections::HashSet<&str> = pts.iter().map(|p| p.config.run_id.as_str()).collect();
        assert_eq!(ids.len(), 12);
        assert!(pts.iter().all(|p| p.config.sweep.is_none()));
        assert_eq!(c.expand_sweep().unwrap(), pts);
    }

    #[test]
    fn sweep_knobs_and_family_switch() {
        let mut c = preset("desk-xy").unwrap();
        for (p, vals) in [
            ("conv_depth", vec![2, 3, 4, 5]),
            ("upscale_count", vec![0, 1, 2, 3]),
            ("pre_mlp_depth", vec![0, 1, 2, 3]),
        ] {
            c.sweep = Some(SweepSpec {
                parameter: p.into(),
                values: vals.into_iter().map(Value::from).collect(),
                replicas: 1,
            });
            assert_eq!(c.expand_sweep().unwrap().len(), 4, "{p}");
        }
        c.sweep = Some(SweepSpec {
            parameter: "family".into(),
            values: vec![Value::from("deconv"), Value::from("coord_conv")],
            replicas: 1,
        });
        let pts = c.expand_sweep().unwrap();
        assert_eq!(pts[0].config.architecture.decoder.family(), "deconv");
        assert_eq!(pts[1].config.architecture.decoder.family(), "coord_conv");
    }

    #[test]
    fn bad_sweeps_fail_before_running() {
        let mut c = preset("desk-xy").unwrap();
        for (p, v) in [
            ("objective.betta", Value::from(1.0)),
            ("architecture.decoder.conv_depth", Value::from(0)),
            ("upscale_count", Value::from(4)),
            ("beta", Value::from("big")),
            ("seed", Value::from(3)),
            ("dataset", Value::from(3)),
        ] {
            c.sweep = Some(SweepSpec {
                parameter: p.into(),
                values: vec![v],
                replicas: 1,
            });
            assert!(matches!(c.expand_sweep(), Err(crate::Error::Config(_))), "{p}");
        }
    }

    #[test]
    fn merge_overrides_nested_keys() {
        let mut base = serde_json::json!({"a": {"b": 1, "c": 2}, "d": 3});
        merge_json(&mut base, serde_json::json!({"a": {"c": 5}, "e": 6}));
        assert_eq!(base, serde_json::json!({"a": {"b": 1, "c": 5}, "d": 3, "e": 6}));
    }
}
