//! Self-supervised denoising training.
//!
//! Windows of `k` clean rows are corrupted by adding Gaussian noise to the
//! control entries of the last row only; the model learns to reconstruct the
//! clean control. Noise is redrawn every epoch. Training is single-threaded
//! with a fixed reduction order, so a seed fully determines the run.

use std::io::Write;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dae::{loss_and_grad_batch, loss_batch, Dims, Gradients, ModelParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Noise standard deviations in normalized control units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_steer: f64,
    pub sigma_pedal: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_steer: 0.05,
            sigma_pedal: 0.2,
        }
    }
}

impl NoiseSpec {
    /// Expected MSE between noisy and clean control, ignoring clamping.
    pub fn baseline_mse(&self) -> f64 {
        (self.sigma_steer.powi(2) + self.sigma_pedal.powi(2)) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dims: Dims,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub val_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dims: Dims::FULL,
            batch_size: 64,
            lr0: 0.005,
            lr_decay: 0.1,
            decay_every: 20,
            epochs: 50,
            noise: NoiseSpec::default(),
            seed: 0,
            val_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `lr0 · lr_decay^⌊epoch / decay_every⌋`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.decay_every.max(1)) as i32)
}

/// Adds noise to the control entries of the last row and clamps them to `[0, 1]`.
pub fn inject_noise<T: Scalar, R: Rng + ?Sized>(
    window: ArrayView2<T>,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Array2<T> {
    let mut out = window.to_owned();
    perturb_last_row(&mut out, spec, rng);
    out
}

fn perturb_last_row<T: Scalar, R: Rng + ?Sized>(w: &mut Array2<T>, spec: &NoiseSpec, rng: &mut R) {
    let last = w.nrows() - 1;
    for (col, sigma) in [spec.sigma_steer, spec.sigma_pedal].into_iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        if sigma != 0.0 {
            let v = w[[last, col]].as_f64() + sigma * z;
            w[[last, col]] = T::of(v.clamp(0.0, 1.0));
        }
    }
}

/// All `k`-step windows of a set of sessions, built on demand. Windows never
/// cross a session boundary.
#[derive(Clone, Debug)]
pub struct WindowSet {
    k: usize,
    sessions: Vec<Array2<f64>>,
    index: Vec<(usize, usize)>,
}

impl WindowSet {
    /// `inputs` holds one normalized `steps × 186` matrix per session.
    pub fn from_inputs(inputs: Vec<Array2<f64>>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("window length must be at least 1".into()));
        }
        let mut index = Vec::new();
        for (s, x) in inputs.iter().enumerate() {
            for end in k - 1..x.nrows() {
                index.push((s, end));
            }
        }
        Ok(Self {
            k,
            sessions: inputs,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.k
    }

    /// Clean window `i`, oldest row first.
    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        let (s, end) = self.index[i];
        self.sessions[s].slice(s![end + 1 - self.k..=end, ..])
    }

    /// Clean control of the last row of window `i`.
    pub fn target(&self, i: usize) -> [f64; 2] {
        let (s, end) = self.index[i];
        [self.sessions[s][[end, 0]], self.sessions[s][[end, 1]]]
    }
}

/// Windows of every session of `d`.
pub fn make_windows(d: &Dataset, k: usize) -> Result<WindowSet> {
    WindowSet::from_inputs(d.sessions.iter().map(|s| s.inputs()).collect(), k)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Gradients<T>,
    v: Gradients<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(dims: Dims, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: Gradients::zeros(dims),
            v: Gradients::zeros(dims),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>, lr: T) {
        self.t += 1;
        let one = T::one();
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let p = params.tensors_mut();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        let g = grads.tensors();
        for (((p, m), v), g) in p.into_iter().zip(m).zip(v).zip(g) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MSE.
    pub params: ModelParams<f64>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// MSE between the noisy and clean validation controls.
    pub val_noisy_mse: f64,
}

/// Writes the loss history as `epoch,lr,train_mse,val_mse` rows.
pub fn write_history_csv<W: Write>(history: &[EpochStats], mut w: W) -> Result<()> {
    writeln!(w, "epoch,lr,train_mse,val_mse")?;
    for h in history {
        writeln!(w, "{},{},{},{}", h.epoch, h.lr, h.train_mse, h.val_mse)?;
    }
    Ok(())
}

/// Splits sessions into train / validation. With ten or more sessions whole
/// sessions are held out; otherwise the tail of every session is.
pub fn split_dataset(d: &Dataset, val_fraction: f64) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let inputs: Vec<Array2<f64>> = d.sessions.iter().map(|s| s.inputs()).collect();
    if val_fraction <= 0.0 {
        return (inputs, Vec::new());
    }
    if inputs.len() >= 10 {
        let n_val = ((inputs.len() as f64 * val_fraction).round() as usize).max(1);
        let mut train = inputs;
        let val = train.split_off(train.len() - n_val);
        (train, val)
    } else {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for x in inputs {
            let n = x.nrows();
            let cut = n - ((n as f64 * val_fraction).round() as usize).min(n);
            train.push(x.slice(s![..cut, ..]).to_owned());
            val.push(x.slice(s![cut.., ..]).to_owned());
        }
        (train, val)
    }
}

/// A fixed noisy copy of a window set, used for validation.
struct FrozenNoisy {
    windows: Vec<Array2<f64>>,
    targets: Vec<[f64; 2]>,
}

impl FrozenNoisy {
    fn new(set: &WindowSet, spec: &NoiseSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let windows = (0..set.len())
            .map(|i| inject_noise(set.window(i), spec, &mut rng))
            .collect();
        let targets = (0..set.len()).map(|i| set.target(i)).collect();
        Self { windows, targets }
    }

    fn noisy_mse(&self) -> f64 {
        let mut acc = 0.0;
        for (w, t) in self.windows.iter().zip(&self.targets) {
            let last = w.nrows() - 1;
            acc += (w[[last, 0]] - t[0]).powi(2) + (w[[last, 1]] - t[1]).powi(2);
        }
        acc / (2 * self.targets.len()).max(1) as f64
    }

    fn model_mse(&self, params: &ModelParams<f64>, batch: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (ws, ts) in self.windows.chunks(batch).zip(self.targets.chunks(batch)) {
            let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
            acc += loss_batch(&views, ts, params)? * ws.len() as f64;
        }
        Ok(acc / self.targets.len().max(1) as f64)
    }
}

pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(d, cfg, |_| {})
}

/// Trains and reports every finished epoch to `on_epoch`.
pub fn train_with(
    d: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
    }
    let (train_x, val_x) = split_dataset(d, cfg.val_fraction);
    let train_set = WindowSet::from_inputs(train_x, cfg.dims.window)?;
    let val_set = WindowSet::from_inputs(val_x, cfg.dims.window)?;
    if train_set.len() < cfg.batch_size {
        return Err(Error::Dataset(format!(
            "{} training windows, fewer than one batch of {}",
            train_set.len(),
            cfg.batch_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f64>::glorot(cfg.dims, &mut rng);
    let mut adam = Adam::new(cfg.dims, cfg.beta1, cfg.beta2, cfg.eps);
    let val = FrozenNoisy::new(&val_set, &cfg.noise, cfg.seed ^ 0x0ddba11);
    let val_noisy_mse = val.noisy_mse();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams<f64>)> = None;
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let windows: Vec<Array2<f64>> = chunk
                .iter()
                .map(|&i| inject_noise(train_set.window(i), &cfg.noise, &mut rng))
                .collect();
            let targets: Vec<[f64; 2]> = chunk.iter().map(|&i| train_set.target(i)).collect();
            let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
            let (loss, grads) = loss_and_grad_batch(&views, &targets, &params)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            adam.step(&mut params, &grads, lr);
            acc += loss * chunk.len() as f64;
        }
        let train_mse = acc / train_set.len() as f64;
        let val_mse = if val_set.is_empty() {
            train_mse
        } else {
            val.model_mse(&params, 256)?
        };
        if !val_mse.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            train_mse,
            val_mse,
        };
        on_epoch(&stats);
        history.push(stats);
        if best.as_ref().map_or(true, |b| val_mse < b.0) {
            best = Some((val_mse, epoch + 1, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        val_noisy_mse,
    })
}
