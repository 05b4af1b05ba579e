use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{Potential, Sample};
use crate::error::{Error, Result};
use crate::layers::{Model, ModelConfig, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub energy_weight: f64,
    pub force_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { energy_weight: 1.0, force_weight: 1000.0 }
    }
}

/// `w_E (E - E_ref)² + w_F · mean over coordinates of (F - F_ref)²`.
pub fn loss(energy: f64, forces: &Array2<f64>, sample: &Sample, cfg: &LossConfig) -> Result<f64> {
    if forces.dim() != sample.forces.dim() {
        return Err(Error::ShapeMismatch(format!("forces {:?} vs reference {:?}", forces.dim(), sample.forces.dim())));
    }
    let de = energy - sample.energy;
    let mse = (forces - &sample.forces).mapv(|v| v * v).mean().unwrap_or(0.0);
    Ok(cfg.energy_weight * de * de + cfg.force_weight * mse)
}

/// Anything that predicts energies and forces for a point cloud.
pub trait Predictor: Sync {
    fn predict(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>)>;
}

impl Predictor for Model {
    fn predict(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>)> {
        self.energy_and_forces(pc)
    }
}

impl Predictor for Potential {
    fn predict(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>)> {
        Ok(self.energy_and_forces(pc.positions()))
    }
}

/// Predicts zero energy and zero forces.
pub struct ZeroModel;

impl Predictor for ZeroModel {
    fn predict(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>)> {
        Ok((0.0, Array2::zeros((pc.len(), 3))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub energy_mae: f64,
    /// Mean absolute error per force component.
    pub force_mae: f64,
    pub samples: usize,
}

/// MAE metrics; with `jobs > 1` predictions fan out over a thread pool and
/// are reduced in sample order.
pub fn evaluate<P: Predictor + ?Sized>(model: &P, samples: &[Sample], jobs: usize) -> Result<Metrics> {
    let predict = |s: &Sample| model.predict(&s.cloud);
    let preds: Vec<(f64, Array2<f64>)> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| samples.par_iter().map(predict).collect::<Result<Vec<_>>>())?
    } else {
        samples.iter().map(predict).collect::<Result<Vec<_>>>()?
    };
    let mut e_sum = 0.0;
    let mut f_sum = 0.0;
    let mut f_count = 0usize;
    for (s, (e, f)) in samples.iter().zip(&preds) {
        e_sum += (e - s.energy).abs();
        f_sum += (f - &s.forces).mapv(f64::abs).sum();
        f_count += f.len();
    }
    let n = samples.len().max(1) as f64;
    Ok(Metrics { energy_mae: e_sum / n, force_mae: f_sum / f_count.max(1) as f64, samples: samples.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, batch_size: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: OptimizerConfig, n: usize) -> Adam {
        Adam { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let b1t = 1.0 - c.beta1.powi(self.t);
        let b2t = 1.0 - c.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * grad[k];
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / b1t;
            let vh = self.v[k] / b2t;
            params[k] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
        }
    }
}

/// Largest coordinate displacement used for the force-loss directional
/// derivative.
pub const FORCE_PROBE_STEP: f64 = 1e-4;

/// Sample loss and its parameter gradient.
///
/// The energy term uses the exact tape gradient. The force term needs
/// `∂F/∂θ`, a mixed second derivative; it is obtained as a central
/// difference of `∂E/∂θ` along the direction `v = ∂L/∂F`:
/// `Σ v·∂F/∂θ ≈ -[∂E/∂θ(x + h v) - ∂E/∂θ(x - h v)] / 2h`.
pub fn loss_and_gradient(model: &Model, sample: &Sample, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let (e, f, ge) = model.energy_forces_gradient(&sample.cloud)?;
    let l = loss(e, &f, sample, cfg)?;
    let mut grad: Vec<f64> = ge.iter().map(|g| 2.0 * cfg.energy_weight * (e - sample.energy) * g).collect();
    let v = (&f - &sample.forces) * (2.0 * cfg.force_weight / f.len() as f64);
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if vmax > 0.0 {
        let h = FORCE_PROBE_STEP / vmax;
        let shifted = |sign: f64| -> Result<Vec<f64>> {
            let p = sample.cloud.positions() + &(&v * (sign * h));
            Ok(model.energy_forces_gradient(&sample.cloud.with_positions(p)?)?.2)
        };
        let (gp, gm) = (shifted(1.0)?, shifted(-1.0)?);
        for k in 0..grad.len() {
            grad[k] -= (gp[k] - gm[k]) / (2.0 * h);
        }
    }
    Ok((l, grad))
}

fn mean_loss(model: &Model, samples: &[Sample], cfg: &LossConfig, epoch: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let (e, f) = model.energy_and_forces(&s.cloud)?;
        let l = loss(e, &f, s, cfg)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, sample: i, value: l });
        }
        total += l;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub initial_train: Metrics,
    pub final_train: Metrics,
    pub test: Metrics,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// `epoch,train_loss,val_loss` with 17 significant digits.
    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "val_loss"]).map_err(csv_err)?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format_real(e.train_loss), format_real(e.val_loss)])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii"))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Scientific notation with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let text = serde_json::to_string(&(model, train)).expect("configs serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Adam on summed mini-batch gradients with a per-seed shuffle each epoch.
/// Epoch 0 holds the losses before any update.
pub fn train(
    model_cfg: &ModelConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Model, RunRecord)> {
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.optimizer.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let start = Instant::now();
    let mut model = Model::new(model_cfg)?;
    let mut flat = model.flat_params();
    let mut adam = Adam::new(cfg.optimizer, flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_train = evaluate(&model, train_set, 1)?;

    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: mean_loss(&model, train_set, &cfg.loss, 0)?,
        val_loss: mean_loss(&model, val_set, &cfg.loss, 0)?,
    }];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.optimizer.batch_size) {
            let mut grad = vec![0.0; flat.len()];
            for &i in batch {
                let (l, g) = loss_and_gradient(&model, &train_set[i], &cfg.loss)?;
                if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, sample: i, value: l });
                }
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            adam.step(&mut flat, &grad);
            model.set_flat_params(&flat)?;
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: mean_loss(&model, train_set, &cfg.loss, epoch)?,
            val_loss: mean_loss(&model, val_set, &cfg.loss, epoch)?,
        });
    }
    let record = RunRecord {
        config_hash: config_hash(model_cfg, cfg),
        seed: cfg.seed,
        epochs,
        initial_train,
        final_train: evaluate(&model, train_set, 1)?,
        test: evaluate(&model, test_set, 1)?,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

/// Splits off the last `val` and `test` fractions after a seeded shuffle.
pub fn split_dataset(samples: &[Sample], val_fraction: f64, test_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    if !(0.0..1.0).contains(&val_fraction) || !(0.0..1.0).contains(&test_fraction) || val_fraction + test_fraction >= 1.0 {
        return Err(Error::Config("validation and test fractions must be in [0, 1) and sum below 1".into()));
    }
    let n = samples.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_val + n_test >= n {
        return Err(Error::Config(format!("{n} samples leave no training data")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let n_train = n - n_val - n_test;
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_val]), pick(&idx[n_train + n_val..])))
}
