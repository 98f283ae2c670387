//! MSE loss, AdamW, cosine learning-rate schedule, and a deterministic
//! training loop over stereo patches.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::imageio::{augment, Image, PatchSet};
use crate::model::weights::{self, WeightsError};
use crate::model::{Model, ModelError};
use crate::params::ParameterStore;
use crate::stereo::StereoPair;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyData,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("loss diverged (non-finite value {loss}) at step {step}")]
    Diverged { step: usize, loss: f64 },
    #[error("schedule step {step} is outside 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("optimizer state does not match the model: {0}")]
    StateMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// Mean squared error over both views and every element.
pub fn mse_loss<'t>(sr: &StereoPair<Var<'t>>, hr: &StereoPair<Var<'t>>) -> Result<Var<'t>, TensorError> {
    let sq_sum = |a: &Var<'t>, b: &Var<'t>| -> Result<Var<'t>, TensorError> {
        let d = a.sub(b)?;
        Ok(d.mul(&d)?.sum())
    };
    let count = sr.left.value().len() + sr.right.value().len();
    let total = sq_sum(&sr.left, &hr.left)?.add(&sq_sum(&sr.right, &hr.right)?)?;
    Ok(total.scale(1.0 / count as f64))
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            lr_max: 3e-3,
            lr_min: 1e-7,
            total_steps: 400_000,
        }
    }
}

impl Schedule {
    pub fn with_total(total_steps: usize) -> Self {
        Self {
            total_steps,
            ..Self::default()
        }
    }

    /// `lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2`.
    pub fn lr_at(&self, t: usize) -> Result<f64> {
        let total = self.total_steps;
        if t > total {
            return Err(TrainError::StepOutOfRange { step: t, total });
        }
        if t == 0 {
            return Ok(self.lr_max);
        }
        if t == total {
            return Ok(self.lr_min);
        }
        let cos = (std::f64::consts::PI * t as f64 / total as f64).cos();
        Ok(self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + cos))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moments for every parameter, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn check(&self, store: &ParameterStore) -> Result<()> {
        let ok = self.m.len() == store.len()
            && self.v.len() == store.len()
            && store
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.len() == p.numel() && v.len() == p.numel());
        if ok {
            Ok(())
        } else {
            Err(TrainError::StateMismatch("moment shapes differ from parameter shapes".into()))
        }
    }

    /// Encodes as `m.<name>`, `v.<name>` arrays plus a one-element `step`.
    pub fn to_bytes(&self, store: &ParameterStore) -> Vec<u8> {
        let step = [self.step as f64];
        let step_shape = [1usize];
        let mut arrays: Vec<(String, &[usize], &[f64])> = Vec::new();
        for (p, m) in store.iter().zip(&self.m) {
            arrays.push((format!("m.{}", p.name), &p.shape, m));
        }
        for (p, v) in store.iter().zip(&self.v) {
            arrays.push((format!("v.{}", p.name), &p.shape, v));
        }
        arrays.push(("step".into(), &step_shape, &step));
        weights::encode(arrays.iter().map(|(n, s, v)| (n.as_str(), *s, *v)))
    }

    pub fn from_bytes(store: &ParameterStore, bytes: &[u8]) -> Result<Self> {
        let arrays = weights::decode(bytes)?;
        let find = |name: &str| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| WeightsError::Missing(name.to_string()))
        };
        let mut state = Self::new(store);
        for (i, p) in store.iter().enumerate() {
            for (prefix, dst) in [("m", &mut state.m[i]), ("v", &mut state.v[i])] {
                let a = find(&format!("{prefix}.{}", p.name))?;
                if a.shape != p.shape {
                    return Err(WeightsError::ShapeMismatch {
                        name: a.name.clone(),
                        expected: p.shape.clone(),
                        found: a.shape.clone(),
                    }
                    .into());
                }
                *dst = a.values.iter().map(|&x| f64::from(x)).collect();
            }
        }
        state.step = find("step")?.values.first().copied().unwrap_or(0.0) as u64;
        if arrays.len() != 2 * store.len() + 1 {
            return Err(TrainError::StateMismatch("sidecar holds extra arrays".into()));
        }
        Ok(state)
    }
}

impl AdamW {
    /// One decoupled-weight-decay Adam update with bias correction.
    pub fn step(&self, store: &mut ParameterStore, grads: &[Vec<f64>], state: &mut OptimState, lr: f64) -> Result<()> {
        state.check(store)?;
        if grads.len() != store.len() || store.iter().zip(grads).any(|(p, g)| g.len() != p.numel()) {
            return Err(TrainError::StateMismatch("gradient shapes differ from parameter shapes".into()));
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
            for j in 0..p.values.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                let x = &mut p.values[j];
                if self.weight_decay != 0.0 {
                    *x -= lr * self.weight_decay * *x;
                }
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Random horizontal/vertical flips.
    pub augment: bool,
    pub optimizer: AdamW,
    /// Stop before the update of the first step whose batch loss is at or
    /// below this value.
    pub stop_below: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let schedule = Schedule::default();
        Self {
            steps: 1000,
            batch_size: 32,
            seed: 0,
            lr_max: schedule.lr_max,
            lr_min: schedule.lr_min,
            augment: true,
            optimizer: AdamW::default(),
            stop_below: None,
        }
    }
}

impl TrainConfig {
    /// Cosine schedule spanning exactly `steps`.
    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            total_steps: self.steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    /// Loss of the batch before this step's update.
    pub loss: f64,
}

/// Loss trace as CSV: `step,lr,loss`.
pub fn trace_csv(trace: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for r in trace {
        let _ = writeln!(out, "{},{:e},{:e}", r.step, r.lr, r.loss);
    }
    out
}

/// Deterministic batch order: a seeded shuffle per epoch and optional flips.
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    len: usize,
    augment: bool,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64, augment: bool) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: Vec::new(),
            cursor: 0,
            len,
            augment,
        }
    }

    /// Next `(patch index, flip_h, flip_v)`.
    pub fn next_item(&mut self) -> (usize, bool, bool) {
        if self.cursor == self.order.len() {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = self.order[self.cursor];
        self.cursor += 1;
        let (h, v) = if self.augment {
            (self.rng.gen(), self.rng.gen())
        } else {
            (false, false)
        };
        (idx, h, v)
    }
}

fn stack(images: &[&Image]) -> Result<Tensor> {
    let tensors: Vec<Tensor> = images.iter().map(|i| i.to_tensor()).collect();
    Ok(Tensor::concat_batch(&tensors.iter().collect::<Vec<_>>())?)
}

/// Batched LR and HR tensors for a list of patches.
pub fn batch_tensors(patches: &[crate::imageio::Patch]) -> Result<(StereoPair<Tensor>, StereoPair<Tensor>)> {
    let lr = StereoPair::new(
        stack(&patches.iter().map(|p| &p.lr.left).collect::<Vec<_>>())?,
        stack(&patches.iter().map(|p| &p.lr.right).collect::<Vec<_>>())?,
    );
    let hr = StereoPair::new(
        stack(&patches.iter().map(|p| &p.hr.left).collect::<Vec<_>>())?,
        stack(&patches.iter().map(|p| &p.hr.right).collect::<Vec<_>>())?,
    );
    Ok((lr, hr))
}

/// Loss and per-parameter gradients (store order) of one batch.
pub fn loss_and_grads(model: &Model, lr: &StereoPair<Tensor>, hr: &StereoPair<Tensor>) -> Result<(f64, Vec<Vec<f64>>)> {
    let tape = Tape::new();
    let params = model.params().bind(&tape);
    let sr = model.forward(&tape, &params, lr)?;
    let target = hr.as_ref().map(|t| tape.constant(t.clone()));
    let loss = mse_loss(&sr, &target)?;
    let value = loss.value().data()[0];
    let grads = tape.backward(&loss)?;
    let grads = params.vars().iter().map(|v| grads.wrt(v).into_data()).collect();
    Ok((value, grads))
}

/// Mean loss of `model` on a batch, without gradients.
pub fn evaluate_loss(model: &Model, lr: &StereoPair<Tensor>, hr: &StereoPair<Tensor>) -> Result<f64> {
    let tape = Tape::inference();
    let params = model.params().bind(&tape);
    let sr = model.forward(&tape, &params, lr)?;
    let target = hr.as_ref().map(|t| tape.constant(t.clone()));
    Ok(mse_loss(&sr, &target)?.value().data()[0])
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: Vec<StepRecord>,
    pub state: OptimState,
}

/// Trains `model` in place. `on_step` sees every record as it is produced.
pub fn train(
    model: &mut Model,
    patches: &PatchSet,
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    if patches.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    let schedule = config.schedule();
    let mut sampler = BatchSampler::new(patches.len(), config.seed, config.augment);
    let mut state = OptimState::new(model.params());
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch: Vec<_> = (0..config.batch_size)
            .map(|_| {
                let (i, h, v) = sampler.next_item();
                augment(&patches.patches[i], h, v)
            })
            .collect();
        let (lr_in, hr) = batch_tensors(&batch)?;
        let (loss, grads) = loss_and_grads(model, &lr_in, &hr)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, loss });
        }
        let lr = schedule.lr_at(step)?;
        let record = StepRecord { step, lr, loss };
        on_step(&record);
        trace.push(record);
        if config.stop_below.is_some_and(|target| loss <= target) {
            break;
        }
        config.optimizer.step(model.params_mut(), &grads, &mut state, lr)?;
    }
    Ok(TrainOutcome { trace, state })
}

/// Writes model weights to `path` and the optimizer state to `<path>.opt`.
pub fn save_checkpoint(model: &Model, state: &OptimState, path: &Path) -> Result<()> {
    model.save_weights(path)?;
    weights::write_file(&sidecar_path(path), &state.to_bytes(model.params()))?;
    Ok(())
}

/// Restores weights and optimizer state written by [`save_checkpoint`].
pub fn load_checkpoint(model: &mut Model, path: &Path) -> Result<OptimState> {
    let state_bytes = weights::read_file(&sidecar_path(path))?;
    let state = OptimState::from_bytes(model.params(), &state_bytes)?;
    model.load_weights(path)?;
    Ok(state)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".opt");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = Schedule::with_total(100);
        assert_eq!(s.lr_at(0).unwrap(), 3e-3);
        assert_eq!(s.lr_at(100).unwrap(), 1e-7);
        assert!((s.lr_at(50).unwrap() - (3e-3 + 1e-7) / 2.0).abs() < 1e-15);
        assert!(matches!(s.lr_at(101), Err(TrainError::StepOutOfRange { .. })));
    }

    #[test]
    fn first_adam_step_moves_by_lr_sign() {
        let mut store = ParameterStore::new();
        store.add("w", vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut state = OptimState::new(&store);
        AdamW::default()
            .step(&mut store, &[vec![0.5, -2.0, 0.0]], &mut state, 0.01)
            .unwrap();
        let v = &store.by_name("w").unwrap().values;
        assert!((v[0] - 0.99).abs() < 1e-8);
        assert!((v[1] - 2.01).abs() < 1e-8);
        assert_eq!(v[2], 3.0);
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(5, 3, false);
        let mut seen: Vec<usize> = (0..5).map(|_| s.next_item().0).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }
}
