//! Alternating two-player training: `k` discriminator updates, then one
//! generator update, both with Adam.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Tensor};
use crate::losses::{
    clip_weights_in_place, discriminator_loss, generator_loss, GanVariant, LossError, PenaltyConfig,
};
use crate::models::{
    generator_forward, generator_moments, init_params, snapshot_json, DiscriminatorParams,
    GeneratorParams, InitScheme, ModelDims, ModelError, DEFAULT_HIDDEN,
};
use crate::rng::{normal_tensor, stream, LabRng, Stream};
use crate::synth::{frechet_squared, sample_data, sample_from_dataset, true_moments, SynthError, TaskSpec, TrainingBatch};

/// Generator steps of a desk-scale run.
pub const DESK_STEPS: u64 = 20_000;
/// Generator steps of a full-scale run.
pub const PAPER_STEPS: u64 = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = state.v[k].data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (state.m[k].data(), state.v[k].data());
        for (i, pi) in p.data_mut().iter_mut().enumerate() {
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *pi -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: GanVariant,
    pub lr_d: f64,
    pub lr_g: f64,
    pub d_steps_per_g: usize,
    /// Number of generator updates.
    pub total_g_steps: u64,
    pub batch_size: usize,
    pub penalty: PenaltyConfig,
    pub clip_c: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init: InitScheme,
    pub log_every: u64,
    pub latent_dim: usize,
    pub hidden: usize,
    pub latent_sigma: f64,
    /// Generator steps at which full parameter snapshots are kept.
    pub snapshot_steps: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: GanVariant::NonSaturating,
            lr_d: 1e-3,
            lr_g: 1e-3,
            d_steps_per_g: 5,
            total_g_steps: DESK_STEPS,
            batch_size: 64,
            penalty: PenaltyConfig::default(),
            clip_c: 0.01,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
            init: InitScheme::Random,
            log_every: 100,
            latent_dim: 1,
            hidden: DEFAULT_HIDDEN,
            latent_sigma: 1.0,
            snapshot_steps: Vec::new(),
        }
    }
}

/// A configuration value that failed validation, with its field path.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl TrainConfig {
    /// Checks ranges; `prefix` is prepended to reported field paths.
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let err = |field: &str, msg: &str| Err(ConfigError::new(format!("{prefix}{field}"), msg));
        let positive = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.lr_d) {
            return err("lr_d", "must be a finite value ≥ 0");
        }
        if !positive(self.lr_g) {
            return err("lr_g", "must be a finite value ≥ 0");
        }
        if self.d_steps_per_g == 0 {
            return err("d_steps_per_g", "must be ≥ 1");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be ≥ 1");
        }
        if !positive(self.penalty.lambda) {
            return err("penalty.lambda", "must be ≥ 0");
        }
        if !(self.clip_c > 0.0) {
            return err("clip_c", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return err("adam_beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return err("adam_beta2", "must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return err("adam_eps", "must be > 0");
        }
        if self.log_every == 0 {
            return err("log_every", "must be ≥ 1");
        }
        if self.latent_dim == 0 {
            return err("latent_dim", "must be ≥ 1");
        }
        if self.hidden == 0 {
            return err("hidden", "must be ≥ 1");
        }
        if !(self.latent_sigma > 0.0) {
            return err("latent_sigma", "must be > 0");
        }
        if let InitScheme::Parallel { .. } = self.init {
            if self.latent_dim != 1 {
                return err("init", "parallel init requires latent_dim = 1");
            }
        }
        Ok(())
    }

    pub fn dims(&self, data_dim: usize) -> ModelDims {
        ModelDims {
            data_dim,
            latent_dim: self.latent_dim,
            hidden: self.hidden,
            latent_sigma: self.latent_sigma,
        }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("non-finite {what} at generator step {step}")]
    NonFinite { step: u64, what: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

impl TrainError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, TrainError::NonFinite { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub frechet_sq: f64,
    /// Losses of the most recent updates; absent at step 0.
    pub loss_g: Option<f64>,
    pub loss_d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub gen: GeneratorParams,
    pub disc: DiscriminatorParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_gen: GeneratorParams,
    pub final_disc: DiscriminatorParams,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingTrace {
    pub fn initial_distance(&self) -> f64 {
        self.records[0].frechet_sq
    }

    pub fn final_distance(&self) -> f64 {
        self.records.last().expect("trace has a step-0 record").frechet_sq
    }

    /// `step,frechet_sq,loss_g,loss_d`; missing losses are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,frechet_sq,loss_g,loss_d\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.step, r.frechet_sq, fmt_opt(r.loss_g), fmt_opt(r.loss_d));
        }
        s
    }

    /// Writes one `snap_{step}.json` per snapshot into `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> io::Result<()> {
        for snap in &self.snapshots {
            let json = serde_json::to_string_pretty(&snapshot_json(&snap.gen, &snap.disc))?;
            std::fs::write(dir.join(format!("snap_{}.json", snap.step)), json + "\n")?;
        }
        Ok(())
    }
}

enum DataSource {
    Stream,
    Fixed(TrainingBatch),
}

struct Run<'a> {
    task: &'a TaskSpec,
    cfg: &'a TrainConfig,
    data: DataSource,
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    gen_adam: AdamState,
    disc_adam: AdamState,
    disc_rng: LabRng,
    gen_rng: LabRng,
    penalty_rng: LabRng,
}

impl Run<'_> {
    fn real_batch(&mut self) -> Tensor {
        let n = self.cfg.batch_size;
        match &self.data {
            DataSource::Stream => sample_data(self.task, n, &mut self.disc_rng).rows,
            DataSource::Fixed(ds) => sample_from_dataset(ds, n, &mut self.disc_rng).rows,
        }
    }

    fn disc_update(&mut self, step: u64) -> Result<f64, TrainError> {
        let real = self.real_batch();
        let z = normal_tensor(
            &mut self.disc_rng,
            &[self.cfg.batch_size, self.gen.latent_dim()],
            self.gen.latent_sigma,
        );
        let fake = generator_forward(&self.gen, &z)?;

        let mut tape = Tape::new();
        let dn = self.disc.register(&mut tape);
        let r = tape.constant(real);
        let f = tape.constant(fake);
        let loss = discriminator_loss(
            self.cfg.variant,
            &mut tape,
            &dn,
            r,
            f,
            &self.cfg.penalty,
            Some(&mut self.penalty_rng),
        )?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::NonFinite { step, what: "discriminator loss" });
        }
        let grads = tape.gradient(loss, &dn.all())?;
        let grads: Vec<&Tensor> = grads.iter().map(|&g| tape.value(g)).collect();
        if !grads.iter().all(|g| g.all_finite()) {
            return Err(TrainError::NonFinite { step, what: "discriminator gradient" });
        }
        let adam = self.cfg.adam(self.cfg.lr_d);
        adam_step(&mut self.disc.tensors_mut(), &grads, &mut self.disc_adam, &adam);
        if self.cfg.variant.clips_weights() {
            clip_weights_in_place(&mut self.disc, self.cfg.clip_c);
        }
        Ok(value)
    }

    fn gen_update(&mut self, step: u64) -> Result<f64, TrainError> {
        let z = normal_tensor(
            &mut self.gen_rng,
            &[self.cfg.batch_size, self.gen.latent_dim()],
            self.gen.latent_sigma,
        );
        let mut tape = Tape::new();
        let gn = self.gen.register(&mut tape);
        let dn = self.disc.register(&mut tape);
        let zn = tape.constant(z);
        let fake = gn.forward(&mut tape, zn)?;
        let loss = generator_loss(self.cfg.variant, &mut tape, &dn, fake)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::NonFinite { step, what: "generator loss" });
        }
        let grads = tape.gradient(loss, &gn.all())?;
        let grads: Vec<&Tensor> = grads.iter().map(|&g| tape.value(g)).collect();
        if !grads.iter().all(|g| g.all_finite()) {
            return Err(TrainError::NonFinite { step, what: "generator gradient" });
        }
        let adam = self.cfg.adam(self.cfg.lr_g);
        adam_step(&mut self.gen.tensors_mut(), &grads, &mut self.gen_adam, &adam);
        if !self.gen.tensors().iter().all(|t| t.all_finite()) {
            return Err(TrainError::NonFinite { step, what: "generator parameters" });
        }
        Ok(value)
    }
}

/// Trains one model pair on `task` and logs the squared Fréchet distance
/// between the true and generated Gaussians. Deterministic given `cfg.seed`.
pub fn train_run(task: &TaskSpec, cfg: &TrainConfig) -> Result<TrainingTrace, TrainError> {
    cfg.validate("")?;
    let dims = cfg.dims(task.d);
    let (gen, disc) = init_params(cfg.seed, &cfg.init, &dims, task)?;
    let target = true_moments(task);
    let distance = |g: &GeneratorParams| frechet_squared(&target, &generator_moments(g));

    let mut run = Run {
        task,
        cfg,
        data: task.fixed_dataset().map_or(DataSource::Stream, DataSource::Fixed),
        gen_adam: AdamState::zeros_like(&gen.tensors()),
        disc_adam: AdamState::zeros_like(&disc.tensors()),
        gen,
        disc,
        disc_rng: stream(cfg.seed, Stream::DiscData),
        gen_rng: stream(cfg.seed, Stream::GenData),
        penalty_rng: stream(cfg.seed, Stream::Penalty),
    };

    let mut records =
        vec![TraceRecord { step: 0, frechet_sq: distance(&run.gen)?, loss_g: None, loss_d: None }];
    let mut snapshots = Vec::new();
    let mut take_snapshot = |step: u64, run: &Run| {
        if cfg.snapshot_steps.contains(&step) {
            snapshots.push(Snapshot { step, gen: run.gen.clone(), disc: run.disc.clone() });
        }
    };
    take_snapshot(0, &run);

    for step in 1..=cfg.total_g_steps {
        let mut loss_d = 0.0;
        for _ in 0..cfg.d_steps_per_g {
            loss_d = run.disc_update(step)?;
        }
        let loss_g = run.gen_update(step)?;
        if step % cfg.log_every == 0 || step == cfg.total_g_steps {
            records.push(TraceRecord {
                step,
                frechet_sq: distance(&run.gen)?,
                loss_g: Some(loss_g),
                loss_d: Some(loss_d),
            });
        }
        take_snapshot(step, &run);
    }

    Ok(TrainingTrace { records, snapshots, final_gen: run.gen, final_disc: run.disc })
}
