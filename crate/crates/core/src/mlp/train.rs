use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::MlpArchitecture;
use super::model::{init_model, mse_and_grad, ForwardMode, MlpModel};
use crate::error::{Error, Result};
use crate::seeds;

/// Paired feature and target vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl RegressionDataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: targets.len(),
            });
        }
        if let (Some(f0), Some(t0)) = (features.first(), targets.first()) {
            let (df, dt) = (f0.len(), t0.len());
            if features.iter().any(|f| f.len() != df) || targets.iter().any(|t| t.len() != dt) {
                return Err(Error::Shape("ragged dataset rows".into()));
            }
        }
        Ok(Self { features, targets })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    fn check_against(&self, arch: &MlpArchitecture) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.feature_dim() != arch.input_dim || self.target_dim() != arch.output_dim {
            return Err(Error::Shape(format!(
                "dataset is {}->{}, architecture is {}->{}",
                self.feature_dim(),
                self.target_dim(),
                arch.input_dim,
                arch.output_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive moments: m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g²,
    /// θ ← θ − η·m̂/(√v̂ + ε) with bias-corrected m̂, v̂.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Stop after this many epochs without a new best training loss; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-mode loss of every epoch that ran.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub stopped_early: bool,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((param, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..param.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
            }
        }
    }
}

/// Relative loss decrease an epoch must achieve to count as a new best.
pub const MIN_RELATIVE_IMPROVEMENT: f64 = 1e-9;

/// Trains a freshly initialized network (seeded by `cfg.seed`) on mean squared
/// error averaged over targets. Single-threaded and bit-reproducible.
pub fn train(dataset: &RegressionDataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    dataset.check_against(arch)?;
    if dataset.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} samples, fewer than batch size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }

    let mut model = init_model(arch, cfg.seed)?;
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "mlp/train", 0));
    let has_bn = arch.hidden_layers.iter().any(|h| h.batch_norm);
    let (din, dout) = (arch.input_dim, arch.output_dim);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut xb = Vec::with_capacity(cfg.batch_size * din);
    let mut yb = Vec::with_capacity(cfg.batch_size * dout);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            // batch statistics of a single sample are degenerate
            if has_bn && batch.len() < 2 {
                continue;
            }
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&dataset.features[i]);
                yb.extend_from_slice(&dataset.targets[i]);
            }
            let n = batch.len();
            let trace = model.run(&xb, n, ForwardMode::TrainWithBatchStats(&mut rng));
            let (loss, d_out) = mse_and_grad(&trace.output, &yb, n);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let grads = model.backward(&trace, &d_out);
            model.update_running_stats(&trace);
            adam.step(&mut model, &grads, cfg.learning_rate);
            loss_sum += loss * n as f64;
            seen += n;
        }
        let epoch_loss = loss_sum / seen.max(1) as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epoch_losses.push(epoch_loss);

        if cfg.patience > 0 {
            // summation order changes with the shuffle, so ignore rounding-level gains
            if epoch_loss < best * (1.0 - MIN_RELATIVE_IMPROVEMENT) {
                best = epoch_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let final_loss = *epoch_losses.last().expect("at least one epoch");
    Ok((
        model,
        TrainReport {
            epoch_losses,
            final_loss,
            stopped_early,
        },
    ))
}

/// Per-target error of a model on a dataset, in the dataset's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: Vec<f64>,
    pub mae: Vec<f64>,
    pub n_samples: usize,
}

/// Root-mean-squared and mean-absolute error per target (inference mode).
pub fn evaluate_error(model: &MlpModel, dataset: &RegressionDataset) -> Result<ErrorReport> {
    dataset.check_against(model.architecture())?;
    let preds = model.predict_series(dataset.features())?;
    Ok(error_report(&preds, dataset.targets()))
}

pub(crate) fn error_report(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> ErrorReport {
    let k = targets[0].len();
    let n = targets.len() as f64;
    let mut sq = vec![0.0; k];
    let mut abs = vec![0.0; k];
    for (p, t) in preds.iter().zip(targets) {
        for j in 0..k {
            let e = p[j] - t[j];
            sq[j] += e * e;
            abs[j] += e.abs();
        }
    }
    ErrorReport {
        rmse: sq.iter().map(|s| (s / n).sqrt()).collect(),
        mae: abs.iter().map(|a| a / n).collect(),
        n_samples: targets.len(),
    }
}
