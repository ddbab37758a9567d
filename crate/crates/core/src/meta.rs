//! Single-video meta training.
//!
//! Each video is its own task. The learner copies the shared parameters,
//! takes `m` plain gradient-descent steps on that one video, and the meta
//! learner treats the displacement `theta - theta_m` as a pseudo-gradient:
//! in sgd mode the update is literal interpolation toward the adapted
//! parameters, in adam mode the pseudo-gradient is fed to a standard Adam
//! step with the meta learning rate. Ablation trainers cover ordinary
//! per-video Adam (no meta split), a batched inner loop, and first-order
//! MAML (the post-adaptation gradient applied to the shared parameters).

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterVector;
use crate::error::{Error, Result};
use crate::model::{DmaSumModel, FeatureSequence, ImportanceScores};
use crate::tensor::SeededRng;

/// Outer-step optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerMode {
    Adam,
    Sgd,
}

/// Meta-training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Inner-loop (learner) rate, alpha.
    pub learner_rate: f64,
    /// Outer-loop (meta) rate, beta.
    pub meta_rate: f64,
    /// Inner gradient steps per task, m.
    pub inner_steps: usize,
    pub epochs: usize,
    pub optimizer: OptimizerMode,
    pub shuffle_seed: u64,
    /// Experimental: run Adam instead of plain SGD inside the inner loop.
    pub inner_adam: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            learner_rate: 3e-5,
            meta_rate: 6e-5,
            inner_steps: 3,
            epochs: 50,
            optimizer: OptimizerMode::Adam,
            shuffle_seed: 0,
            inner_adam: false,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learner_rate <= 0.0 || self.meta_rate <= 0.0 {
            return Err(Error::Input(format!(
                "learning rates must be positive (alpha={}, beta={})",
                self.learner_rate, self.meta_rate
            )));
        }
        Ok(())
    }
}

/// One training task: a single video and its target scores.
#[derive(Debug, Clone)]
pub struct VideoTask {
    pub id: String,
    pub features: FeatureSequence,
    pub target: ImportanceScores,
}

impl VideoTask {
    pub fn new(
        id: impl Into<String>,
        features: FeatureSequence,
        target: ImportanceScores,
    ) -> Result<Self> {
        if features.frames() != target.len() {
            return Err(Error::shape(
                "video_task",
                format!("{} frames vs {} targets", features.frames(), target.len()),
            ));
        }
        Ok(VideoTask {
            id: id.into(),
            features,
            target,
        })
    }
}

/// Bias-corrected Adam accumulators over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(total_elements: usize) -> Self {
        AdamState {
            m: vec![0.0; total_elements],
            v: vec![0.0; total_elements],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Standard bias-corrected Adam update of `params` in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParameterVector,
    grads: &ParameterVector,
    lr: f64,
) -> Result<()> {
    if !params.same_layout(grads) {
        return Err(Error::shape(
            "adam_step",
            "gradient layout differs from parameters",
        ));
    }
    if params.total_elements() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} elements vs {} accumulators",
                params.total_elements(),
                state.m.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let mut offset = 0;
    for idx in 0..params.len() {
        let g = grads.value(idx).data().to_vec();
        let p = params.value_mut(idx).data_mut();
        for (k, gk) in g.iter().enumerate() {
            let slot = offset + k;
            state.m[slot] = state.beta1 * state.m[slot] + (1.0 - state.beta1) * gk;
            state.v[slot] = state.beta2 * state.v[slot] + (1.0 - state.beta2) * gk * gk;
            let m_hat = state.m[slot] / bc1;
            let v_hat = state.v[slot] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        offset += g.len();
    }
    Ok(())
}

/// `steps` plain gradient-descent iterations of an arbitrary loss, starting
/// from a copy of `start`. With `inner_adam` a fresh Adam state drives the
/// steps instead.
pub fn inner_loop_with<F>(
    mut loss_and_grad: F,
    start: &ParameterVector,
    steps: usize,
    rate: f64,
    inner_adam: bool,
) -> Result<ParameterVector>
where
    F: FnMut(&ParameterVector) -> Result<(f64, ParameterVector)>,
{
    let mut adapted = start.clone();
    let mut adam = inner_adam.then(|| AdamState::new(start.total_elements()));
    for _ in 0..steps {
        let (_, grad) = loss_and_grad(&adapted)?;
        match adam.as_mut() {
            Some(state) => adam_step(state, &mut adapted, &grad, rate)?,
            None => adapted.axpy(-rate, &grad)?,
        }
    }
    Ok(adapted)
}

fn task_loss_and_grad(
    model: &DmaSumModel,
    task: &VideoTask,
    params: &ParameterVector,
    rng: &mut SeededRng,
    want_grad: bool,
) -> Result<(f64, Option<ParameterVector>)> {
    model
        .loss_and_grad(params, &task.features, &task.target, rng, want_grad)
        .map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("task '{}': {}", task.id, msg)),
            other => other,
        })
}

/// The learner: `m` gradient steps on one video, starting from a copy of
/// the shared parameters. The shared parameters are never mutated.
pub fn learner_inner_loop(
    model: &DmaSumModel,
    task: &VideoTask,
    params: &ParameterVector,
    cfg: &MetaConfig,
    rng: &mut SeededRng,
) -> Result<ParameterVector> {
    inner_loop_with(
        |p| {
            let (loss, grad) = task_loss_and_grad(model, task, p, rng, true)?;
            Ok((loss, grad.expect("gradient requested")))
        },
        params,
        cfg.inner_steps,
        cfg.learner_rate,
        cfg.inner_adam,
    )
}

/// Meta update from adapted parameters: pseudo-gradient `g = theta - theta_m`;
/// sgd mode applies `theta - beta * g` (literal interpolation), adam mode
/// feeds `g` to [`adam_step`] with the meta rate.
pub fn meta_update(
    params: &ParameterVector,
    adapted: &ParameterVector,
    cfg: &MetaConfig,
    adam: &mut AdamState,
) -> Result<ParameterVector> {
    let pseudo_grad = params.sub(adapted)?;
    let mut next = params.clone();
    match cfg.optimizer {
        OptimizerMode::Sgd => next.axpy(-cfg.meta_rate, &pseudo_grad)?,
        OptimizerMode::Adam => adam_step(adam, &mut next, &pseudo_grad, cfg.meta_rate)?,
    }
    Ok(next)
}

/// One line of the training log: one meta update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub task_id: String,
    pub inner_final_loss: f64,
    pub meta_param_delta_l2: f64,
}

/// Render log rows as CSV (`epoch,task_id,inner_final_loss,meta_param_delta_l2`),
/// prefixed with a comment line recording the trainer variant and seed.
pub fn render_train_log(kind: &str, seed: u64, rows: &[TrainLogRow]) -> String {
    let mut out = format!("# trainer={} seed={}\n", kind, seed);
    out.push_str("epoch,task_id,inner_final_loss,meta_param_delta_l2\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            row.epoch, row.task_id, row.inner_final_loss, row.meta_param_delta_l2
        ));
    }
    out
}

/// Deterministic per-epoch task order: a seeded shuffle of `0..n`.
fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(shuffle_seed).derive(epoch as u64 + 1);
    rng.shuffle(&mut order);
    order
}

/// One epoch of single-video meta training: exactly one meta update per task,
/// tasks visited in a seeded shuffle. Equivalent to [`batch_train_epoch`]
/// with batch size 1.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &DmaSumModel,
    tasks: &[VideoTask],
    params: &mut ParameterVector,
    cfg: &MetaConfig,
    adam: &mut AdamState,
    epoch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainLogRow>> {
    batch_train_epoch(model, tasks, params, cfg, adam, epoch, 1, rng)
}

/// One epoch of the batched ablation: the inner loop descends the summed
/// loss of each batch, with one meta update per batch. Batch size 1
/// reproduces [`train_epoch`] exactly.
#[allow(clippy::too_many_arguments)]
pub fn batch_train_epoch(
    model: &DmaSumModel,
    tasks: &[VideoTask],
    params: &mut ParameterVector,
    cfg: &MetaConfig,
    adam: &mut AdamState,
    epoch: usize,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainLogRow>> {
    if tasks.is_empty() {
        return Err(Error::Input("task list is empty".into()));
    }
    if batch == 0 {
        return Err(Error::Input("batch size must be >= 1".into()));
    }
    cfg.validate()?;

    let order = epoch_order(tasks.len(), cfg.shuffle_seed, epoch);
    let mut log = Vec::new();
    for chunk in order.chunks(batch) {
        let members: Vec<&VideoTask> = chunk.iter().map(|&i| &tasks[i]).collect();

        let adapted = inner_loop_with(
            |p| {
                let mut total_loss = 0.0;
                let mut total_grad: Option<ParameterVector> = None;
                for task in &members {
                    let (loss, grad) = task_loss_and_grad(model, task, p, rng, true)?;
                    total_loss += loss;
                    let grad = grad.expect("gradient requested");
                    total_grad = Some(match total_grad {
                        None => grad,
                        Some(mut acc) => {
                            acc.axpy(1.0, &grad)?;
                            acc
                        }
                    });
                }
                Ok((total_loss, total_grad.expect("chunk is nonempty")))
            },
            params,
            cfg.inner_steps,
            cfg.learner_rate,
            cfg.inner_adam,
        )?;

        let mut final_loss = 0.0;
        for task in &members {
            final_loss += task_loss_and_grad(model, task, &adapted, rng, false)?.0;
        }

        let next = meta_update(params, &adapted, cfg, adam)?;
        let delta = next.sub(params)?.l2_norm();
        let ids: Vec<&str> = members.iter().map(|t| t.id.as_str()).collect();
        log.push(TrainLogRow {
            epoch,
            task_id: ids.join("+"),
            inner_final_loss: final_loss,
            meta_param_delta_l2: delta,
        });
        *params = next;
    }
    Ok(log)
}

/// One epoch of the no-meta ablation: ordinary Adam over per-video losses,
/// no inner/outer split. The logged loss is the pre-step loss of each video.
pub fn plain_train_epoch(
    model: &DmaSumModel,
    tasks: &[VideoTask],
    params: &mut ParameterVector,
    cfg: &MetaConfig,
    adam: &mut AdamState,
    epoch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainLogRow>> {
    if tasks.is_empty() {
        return Err(Error::Input("task list is empty".into()));
    }
    cfg.validate()?;
    let order = epoch_order(tasks.len(), cfg.shuffle_seed, epoch);
    let mut log = Vec::new();
    for &i in &order {
        let task = &tasks[i];
        let (loss, grad) = task_loss_and_grad(model, task, params, rng, true)?;
        let grad = grad.expect("gradient requested");
        let before = params.clone();
        adam_step(adam, params, &grad, cfg.learner_rate)?;
        log.push(TrainLogRow {
            epoch,
            task_id: task.id.clone(),
            inner_final_loss: loss,
            meta_param_delta_l2: params.sub(&before)?.l2_norm(),
        });
    }
    Ok(log)
}

/// One epoch of first-order MAML: the gradient of the post-inner-loop loss,
/// evaluated at the adapted parameters, is applied to the shared parameters.
#[allow(clippy::too_many_arguments)]
pub fn fomaml_train_epoch(
    model: &DmaSumModel,
    tasks: &[VideoTask],
    params: &mut ParameterVector,
    cfg: &MetaConfig,
    adam: &mut AdamState,
    epoch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainLogRow>> {
    if tasks.is_empty() {
        return Err(Error::Input("task list is empty".into()));
    }
    cfg.validate()?;
    let order = epoch_order(tasks.len(), cfg.shuffle_seed, epoch);
    let mut log = Vec::new();
    for &i in &order {
        let task = &tasks[i];
        let adapted = learner_inner_loop(model, task, params, cfg, rng)?;
        let (loss, grad) = task_loss_and_grad(model, task, &adapted, rng, true)?;
        let grad = grad.expect("gradient requested");
        let before = params.clone();
        match cfg.optimizer {
            OptimizerMode::Sgd => params.axpy(-cfg.meta_rate, &grad)?,
            OptimizerMode::Adam => adam_step(adam, params, &grad, cfg.meta_rate)?,
        }
        log.push(TrainLogRow {
            epoch,
            task_id: task.id.clone(),
            inner_final_loss: loss,
            meta_param_delta_l2: params.sub(&before)?.l2_norm(),
        });
    }
    Ok(log)
}

/// Trainer selection for full runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    /// Single-video meta training (the default).
    Meta,
    /// Ordinary Adam, no meta learning.
    NoMeta,
    /// Batched inner loop with the given batch size.
    BatchMeta(usize),
    /// First-order MAML.
    Fomaml,
}

impl TrainerKind {
    pub fn label(&self) -> String {
        match self {
            TrainerKind::Meta => "single-video-meta".into(),
            TrainerKind::NoMeta => "no-meta".into(),
            TrainerKind::BatchMeta(b) => format!("batch-meta-{}", b),
            TrainerKind::Fomaml => "fomaml".into(),
        }
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterVector,
    pub log: Vec<TrainLogRow>,
}

/// Run `cfg.epochs` epochs of the chosen trainer from `init`. Dropout draws
/// come from a stream seeded with `dropout_seed`, so a run is fully
/// determined by (initial parameters, config, tasks, seed).
pub fn train(
    model: &DmaSumModel,
    tasks: &[VideoTask],
    init: ParameterVector,
    cfg: &MetaConfig,
    kind: TrainerKind,
    dropout_seed: u64,
) -> Result<TrainOutcome> {
    let mut params = init;
    let mut adam = AdamState::new(params.total_elements());
    let mut rng = SeededRng::new(dropout_seed);
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let rows = match kind {
            TrainerKind::Meta => {
                train_epoch(model, tasks, &mut params, cfg, &mut adam, epoch, &mut rng)?
            }
            TrainerKind::NoMeta => {
                plain_train_epoch(model, tasks, &mut params, cfg, &mut adam, epoch, &mut rng)?
            }
            TrainerKind::BatchMeta(batch) => batch_train_epoch(
                model,
                tasks,
                &mut params,
                cfg,
                &mut adam,
                epoch,
                batch,
                &mut rng,
            )?,
            TrainerKind::Fomaml => {
                fomaml_train_epoch(model, tasks, &mut params, cfg, &mut adam, epoch, &mut rng)?
            }
        };
        log.extend(rows);
    }
    Ok(TrainOutcome { params, log })
}
