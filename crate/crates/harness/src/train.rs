//! The three training phases: forecasting backbone, frozen-backbone action
//! heads, and the end-to-end behavior-cloning baseline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vkchain_core::ot::OtParams;
use vkchain_core::seed;
use vkchain_envsim::{Dataset, RobotVariant};
use vkchain_model::vkt::{ACTION_HEAD, BACKBONE, POINT_HEAD};
use vkchain_model::{vkt_loss, Observation, Vkt, VktConfig};
use vkchain_tensor::{Adam, Tape, Tensor};

use crate::ckpt::{backbone_hash, load_model, model_label, save_model, CheckpointMeta, ModelKind};
use crate::data::{check_compatible, load_datasets, Loader, Phase, Sample, SampleRef};
use crate::error::{HarnessError, Result};
use crate::metrics::{MetricsRecord, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub phase: Phase,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub data: Vec<PathBuf>,
    pub envs: Vec<String>,
    pub augment: bool,
    pub log_interval: u64,
    /// Zero saves only at the end.
    pub checkpoint_interval: u64,
    pub clip_norm: Option<f64>,
    /// Cosine decay of the learning rate to zero over `steps`.
    #[serde(default)]
    pub cosine: bool,
    pub ot_eps: f64,
    pub ot_max_iters: usize,
    pub ot_tol: f64,
}

impl TrainRecipe {
    pub fn new(phase: Phase, data: Vec<PathBuf>, seed: u64) -> Self {
        let steps = if phase == Phase::HeadOnly { 2000 } else { 6000 };
        TrainRecipe {
            phase,
            steps,
            batch_size: 16,
            lr: 3e-4,
            seed,
            data,
            envs: Vec::new(),
            augment: false,
            log_interval: 100,
            checkpoint_interval: 0,
            clip_norm: Some(1.0),
            cosine: true,
            ot_eps: 0.01,
            ot_max_iters: 100,
            ot_tol: 1e-4,
        }
    }

    pub fn ot(&self) -> OtParams {
        OtParams { eps: self.ot_eps, max_iters: self.ot_max_iters, tol: self.ot_tol }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.log_interval == 0 {
            return Err(HarnessError::Validation("steps, batch size and log interval must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(HarnessError::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Learning rate for 1-based `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if !self.cosine {
            return self.lr;
        }
        let progress = (step - 1) as f64 / self.steps as f64;
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    fn adam(&self) -> Adam<f32> {
        let mut opt = Adam::new(self.lr as f32);
        opt.clip_norm = self.clip_norm.map(|c| c as f32);
        opt
    }
}

/// What a finished training phase leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Vkt<f32>,
    pub meta: CheckpointMeta,
    /// Loss at every optimizer step.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Mean of the last `n` step losses.
    pub fn final_loss(&self, n: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

fn setting_of(sets: &[Dataset]) -> String {
    let mut names: Vec<&str> = sets.iter().map(|s| s.manifest.robot_variant.name()).collect();
    names.dedup();
    names.join("+")
}

fn observations(samples: &[Sample]) -> Vec<Observation<'_>> {
    samples.iter().map(|s| Observation { instruction_id: s.instruction_id, views: s.images.iter().collect() }).collect()
}

/// Logs the running mean loss every `log_interval` steps and checkpoints on schedule.
struct Logger {
    writer: MetricsWriter,
    start: Instant,
    phase: Phase,
    label: String,
    setting: String,
    env: Option<String>,
    seed: u64,
    window: Vec<f64>,
}

impl Logger {
    fn new(out: &Path, recipe: &TrainRecipe, label: String, setting: String, env: Option<String>) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        Ok(Logger {
            writer: MetricsWriter::append(&out.join(METRICS_FILE))?,
            start: Instant::now(),
            phase: recipe.phase,
            label,
            setting,
            env,
            seed: recipe.seed,
            window: Vec::new(),
        })
    }

    fn push(&mut self, step: u64, loss: f64, recipe: &TrainRecipe) -> Result<()> {
        if !loss.is_finite() {
            return Err(HarnessError::Validation(format!("non-finite loss at step {step}")));
        }
        self.window.push(loss);
        if step % recipe.log_interval == 0 {
            let mean = self.window.iter().sum::<f64>() / self.window.len() as f64;
            self.window.clear();
            self.writer.write(&MetricsRecord {
                step,
                phase: self.phase.name().into(),
                model: Some(self.label.clone()),
                setting: Some(self.setting.clone()),
                env: self.env.clone(),
                loss: Some(mean),
                wall_clock: self.start.elapsed().as_secs_f64(),
                seed: self.seed,
                ..Default::default()
            })?;
        }
        Ok(())
    }
}

fn due(step: u64, recipe: &TrainRecipe) -> bool {
    recipe.checkpoint_interval > 0 && step % recipe.checkpoint_interval == 0 && step < recipe.steps
}

/// Trains backbone and point head with the EMD objective alone.
pub fn train_vkt(recipe: &TrainRecipe, config: &VktConfig, out: &Path) -> Result<TrainOutcome> {
    recipe.validate()?;
    let sets = load_datasets(&recipe.data)?;
    check_compatible(config, &sets)?;
    let loader = Loader::new(&sets, Phase::VktBackbone);
    // the loader must refuse action reads before any optimization happens
    let probe = loader.refs()[0];
    if loader.actions(probe, config.T).is_ok() {
        return Err(HarnessError::Phase("backbone phase could read actions".into()));
    }
    let refused = loader.violations();

    let setting = setting_of(&sets);
    let views = sets[0].manifest.n_views();
    let mut model = Vkt::<f32>::new(config.clone(), recipe.seed)?;
    let mut opt = recipe.adam();
    let ot = recipe.ot();
    let mut log = Logger::new(out, recipe, model_label(ModelKind::Vkt, config), setting.clone(), None)?;
    let mut losses = Vec::with_capacity(recipe.steps as usize);
    for step in 1..=recipe.steps {
        let refs = loader.batch(recipe.seed, step, recipe.batch_size);
        let samples = refs
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let aug = recipe.augment.then(|| seed::derive(recipe.seed, "augment", step * recipe.batch_size as u64 + i as u64));
                loader.sample(r, config, aug)
            })
            .collect::<Result<Vec<_>>>()?;
        // groups are ordered sample-major, then view, then timestep
        let gt: Vec<_> = samples.iter().flat_map(|s| s.points.as_ref().expect("backbone phase reads points").iter().flatten().cloned()).collect();
        let mut t = Tape::new();
        let fwd = model.forward(&mut t, &observations(&samples))?;
        let (loss, value) = vkt_loss(&mut t, fwd.points.expect("forecasting model"), &gt, &ot)?;
        let grads = t.backward(loss)?;
        opt.lr = recipe.lr_at(step) as f32;
        opt.step(&mut model.params, &grads)?;
        losses.push(value);
        log.push(step, value, recipe)?;
        if due(step, recipe) {
            save_model(&model, ModelKind::Vkt, &setting, views, step, out)?;
        }
    }
    if loader.violations() != refused {
        return Err(HarnessError::Phase(format!("{} action reads during backbone training", loader.violations() - refused)));
    }
    let meta = save_model(&model, ModelKind::Vkt, &setting, views, recipe.steps, out)?;
    Ok(TrainOutcome { model, meta, losses })
}

fn single_env(sets: &[Dataset], env: &str) -> Result<RobotVariant> {
    let variant: RobotVariant = env.parse()?;
    if let Some(s) = sets.iter().find(|s| s.manifest.robot_variant != variant) {
        return Err(HarnessError::Validation(format!("dataset for {} given to head training for {env}", s.manifest.robot_variant)));
    }
    Ok(variant)
}

fn action_tensor(samples: &[&Sample], dim: usize) -> Result<Tensor<f32>> {
    let data: Vec<f32> = samples.iter().flat_map(|s| s.actions.as_ref().expect("action phase reads actions").iter().flatten().copied()).collect();
    let t = data.len() / (samples.len() * dim);
    Ok(Tensor::new(&[samples.len(), t, dim], data)?)
}

/// Fails unless every backbone gradient in `grads` is exactly zero.
fn check_frozen(model: &Vkt<f32>, grads: &vkchain_tensor::Grads<f32>) -> Result<()> {
    for (id, g) in grads.params() {
        let name = &model.params.get(id).name;
        if !name.starts_with(ACTION_HEAD) && g.data().iter().any(|&v| v != 0.0) {
            return Err(HarnessError::Phase(format!("non-zero gradient on frozen parameter {name}")));
        }
    }
    Ok(())
}

/// Trains one environment's convolution head on a frozen backbone.
///
/// The backbone's kinematics embeddings are computed once per sample; every
/// checkpoint interval (and on the first step) the head loss is also
/// recomputed through the full graph to confirm the backbone receives no
/// gradient.
pub fn train_head(recipe: &TrainRecipe, backbone: &Path, env: &str, out: &Path) -> Result<TrainOutcome> {
    recipe.validate()?;
    let (mut model, base_meta) = load_model(backbone)?;
    let sets = load_datasets(&recipe.data)?;
    check_compatible(&model.config, &sets)?;
    let variant = single_env(&sets, env)?;
    model.register_head(env, variant.action_dim())?;
    model.params.set_frozen(BACKBONE, true);
    model.params.set_frozen(POINT_HEAD, true);
    let before = backbone_hash(&model.params);

    let config = model.config.clone();
    let loader = Loader::new(&sets, Phase::HeadOnly);
    let mut cache: BTreeMap<(usize, usize, usize), Vec<f32>> = BTreeMap::new();
    let embed = |model: &Vkt<f32>, r: SampleRef| -> Result<Vec<f32>> {
        let obs = Observation { instruction_id: loader.instruction(r), views: loader.images(r).iter().collect() };
        let mut t = Tape::inference();
        let (k, _) = model.backbone(&mut t, std::slice::from_ref(&obs))?;
        Ok(t.value(k).data().to_vec())
    };

    let mut opt = recipe.adam();
    let mut log = Logger::new(out, recipe, model_label(ModelKind::Vkt, &config), base_meta.setting.clone(), Some(env.to_string()))?;
    let mut losses = Vec::with_capacity(recipe.steps as usize);
    let views = sets[0].manifest.n_views();
    let dim = variant.action_dim();
    for step in 1..=recipe.steps {
        let refs = loader.batch(recipe.seed, step, recipe.batch_size);
        let samples = refs.iter().map(|&r| loader.sample(r, &config, None)).collect::<Result<Vec<_>>>()?;
        let mut emb = Vec::with_capacity(refs.len() * views * config.T * config.D);
        for &r in &refs {
            let key = (r.dataset, r.episode, r.step);
            if !cache.contains_key(&key) {
                cache.insert(key, embed(&model, r)?);
            }
            emb.extend_from_slice(&cache[&key]);
        }
        let target = action_tensor(&samples.iter().collect::<Vec<_>>(), dim)?;
        let mut t = Tape::new();
        let k = t.constant(Tensor::new(&[refs.len() * views, config.T, config.D], emb)?);
        let pred = model.action_head(&mut t, k, refs.len(), views, env)?;
        let loss = t.mse(pred, &target)?;
        let value = f64::from(t.value(loss).item());
        let grads = t.backward(loss)?;

        if step == 1 || due(step, recipe) {
            let mut full = Tape::new();
            let (kin, _) = model.backbone(&mut full, &observations(&samples))?;
            let pred = model.action_head(&mut full, kin, refs.len(), views, env)?;
            let l = full.mse(pred, &target)?;
            check_frozen(&model, &full.backward(l)?)?;
        }
        opt.lr = recipe.lr_at(step) as f32;
        opt.step(&mut model.params, &grads)?;
        losses.push(value);
        log.push(step, value, recipe)?;
        if due(step, recipe) {
            save_model(&model, ModelKind::Vkt, &base_meta.setting, views, base_meta.step, out)?;
        }
    }
    if backbone_hash(&model.params) != before {
        return Err(HarnessError::Phase("backbone parameters changed during head training".into()));
    }
    if loader.violations() != 0 {
        return Err(HarnessError::Phase("head phase requested point sets".into()));
    }
    model.params.set_frozen(BACKBONE, false);
    model.params.set_frozen(POINT_HEAD, false);
    let meta = save_model(&model, ModelKind::Vkt, &base_meta.setting, views, base_meta.step, out)?;
    Ok(TrainOutcome { model, meta, losses })
}

/// End-to-end action regression on the same backbone, one head per environment.
pub fn train_bct(recipe: &TrainRecipe, config: &VktConfig, out: &Path) -> Result<TrainOutcome> {
    recipe.validate()?;
    let sets = load_datasets(&recipe.data)?;
    check_compatible(config, &sets)?;
    let mut heads: Vec<(String, usize)> = Vec::new();
    for env in &recipe.envs {
        let v: RobotVariant = env.parse()?;
        heads.push((v.name().to_string(), v.action_dim()));
    }
    if let Some(s) = sets.iter().find(|s| !heads.iter().any(|(e, _)| e == s.manifest.robot_variant.name())) {
        return Err(HarnessError::Validation(format!("no head for dataset robot {}", s.manifest.robot_variant)));
    }
    let loader = Loader::new(&sets, Phase::BctEndToEnd);
    let probe = loader.refs()[0];
    if loader.points(probe, config.T, config.mode).is_ok() {
        return Err(HarnessError::Phase("behavior-cloning phase could read point sets".into()));
    }
    let refused = loader.violations();

    let setting = setting_of(&sets);
    let views = sets[0].manifest.n_views();
    let head_refs: Vec<(&str, usize)> = heads.iter().map(|(e, d)| (e.as_str(), *d)).collect();
    let mut model = Vkt::<f32>::new_bct(config.clone(), recipe.seed, &head_refs)?;
    let mut opt = recipe.adam();
    let mut log = Logger::new(out, recipe, model_label(ModelKind::Bct, config), setting.clone(), None)?;
    let mut losses = Vec::with_capacity(recipe.steps as usize);
    for step in 1..=recipe.steps {
        let refs = loader.batch(recipe.seed, step, recipe.batch_size);
        let samples = refs.iter().map(|&r| loader.sample(r, config, None)).collect::<Result<Vec<_>>>()?;
        let mut t = Tape::new();
        let (kin, _) = model.backbone(&mut t, &observations(&samples))?;
        let mut terms = Vec::new();
        for (env, dim) in &heads {
            let members: Vec<usize> = (0..samples.len()).filter(|&b| samples[b].env.name() == env).collect();
            if members.is_empty() {
                continue;
            }
            let rows: Vec<usize> = members.iter().flat_map(|&b| (0..views).map(move |v| b * views + v)).collect();
            let k = t.gather_rows(kin, &rows)?;
            let pred = model.action_head(&mut t, k, members.len(), views, env)?;
            let target = action_tensor(&members.iter().map(|&b| &samples[b]).collect::<Vec<_>>(), *dim)?;
            let l = t.mse(pred, &target)?;
            terms.push(t.scale(l, members.len() as f32 / samples.len() as f32));
        }
        let mut loss = terms[0];
        for &x in &terms[1..] {
            loss = t.add(loss, x)?;
        }
        let value = f64::from(t.value(loss).item());
        let grads = t.backward(loss)?;
        opt.lr = recipe.lr_at(step) as f32;
        opt.step(&mut model.params, &grads)?;
        losses.push(value);
        log.push(step, value, recipe)?;
        if due(step, recipe) {
            save_model(&model, ModelKind::Bct, &setting, views, step, out)?;
        }
    }
    if loader.violations() != refused {
        return Err(HarnessError::Phase("behavior-cloning phase requested point sets".into()));
    }
    let meta = save_model(&model, ModelKind::Bct, &setting, views, recipe.steps, out)?;
    Ok(TrainOutcome { model, meta, losses })
}
