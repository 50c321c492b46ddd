use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::MlpArchitecture;
use crate::error::{Error, Result};
use crate::seeds;

/// Added to the variance before taking the square root in batch norm.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in the exponential moving average.
pub const BN_MOMENTUM: f64 = 0.9;

/// Affine layer, weights stored row-major as `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// `out[i] = W · input[i] + b` for a batch of `n` rows.
    fn forward(&self, input: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.out_dim];
        for i in 0..n {
            let row = &input[i * self.in_dim..(i + 1) * self.in_dim];
            for j in 0..self.out_dim {
                let w = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
                out[i * self.out_dim + j] =
                    self.bias[j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }
}

/// Batch-norm parameters and running statistics of one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormState {
    fn identity(width: usize) -> Self {
        Self {
            scale: vec![1.0; width],
            shift: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// How a forward pass treats batch norm and dropout.
pub enum ForwardMode<'a> {
    /// Running statistics, no dropout. Deterministic.
    Inference,
    /// Statistics of the current batch, inverted dropout drawn from `rng`.
    TrainWithBatchStats(&'a mut ChaCha8Rng),
}

/// A dense feedforward regression network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    architecture: MlpArchitecture,
    /// Hidden layers followed by the output layer.
    layers: Vec<Dense>,
    /// One entry per hidden layer.
    norms: Vec<Option<BatchNormState>>,
    training_seed: u64,
}

pub(crate) struct LayerTrace {
    input: Vec<f64>,
    xhat: Vec<f64>,
    normed: Vec<f64>,
    mask: Option<Vec<f64>>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

pub(crate) struct Trace {
    pub(crate) n: usize,
    batch_stats: bool,
    hidden: Vec<LayerTrace>,
    last_input: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

impl Trace {
    /// Smallest distance of any activation input from zero, where ReLU has its kink.
    #[cfg(test)]
    pub(crate) fn activation_margin(&self) -> f64 {
        self.hidden
            .iter()
            .flat_map(|t| t.normed.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Gradients in parameter order (see [`MlpModel::params`]).
pub(crate) type Grads = Vec<Vec<f64>>;

/// Initializes a model: weights uniform in ±√(6/(fan_in+fan_out)), zero biases,
/// identity batch norm with running statistics (0, 1).
pub fn init_model(arch: &MlpArchitecture, seed: u64) -> Result<MlpModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "mlp/init", 0));
    let layers = arch
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let mut d = Dense::zeros(fan_in, fan_out);
            let bound = glorot_bound(fan_in, fan_out);
            for w in &mut d.weights {
                *w = rng.random_range(-bound..=bound);
            }
            d
        })
        .collect();
    let norms = arch
        .hidden_layers
        .iter()
        .map(|h| h.batch_norm.then(|| BatchNormState::identity(h.width)))
        .collect();
    Ok(MlpModel {
        architecture: arch.clone(),
        layers,
        norms,
        training_seed: seed,
    })
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl MlpModel {
    /// Assembles a model from explicit tensors, checking every shape against `arch`.
    pub fn from_parts(
        arch: MlpArchitecture,
        layers: Vec<Dense>,
        norms: Vec<Option<BatchNormState>>,
        training_seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if layers.len() != dims.len() || norms.len() != arch.hidden_layers.len() {
            return Err(Error::Shape("layer count does not match architecture".into()));
        }
        for (l, (layer, &(fan_in, fan_out))) in layers.iter().zip(&dims).enumerate() {
            if layer.in_dim != fan_in
                || layer.out_dim != fan_out
                || layer.weights.len() != fan_in * fan_out
                || layer.bias.len() != fan_out
            {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {fan_out}x{fan_in} weights"
                )));
            }
        }
        for (l, (norm, h)) in norms.iter().zip(&arch.hidden_layers).enumerate() {
            match norm {
                None if !h.batch_norm => {}
                Some(bn) if h.batch_norm => {
                    let w = h.width;
                    if bn.scale.len() != w
                        || bn.shift.len() != w
                        || bn.running_mean.len() != w
                        || bn.running_var.len() != w
                    {
                        return Err(Error::Shape(format!("batch norm {l}: expected width {w}")));
                    }
                    if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                        return Err(Error::Shape(format!(
                            "batch norm {l}: running variance must be positive"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Shape(format!(
                        "batch norm {l}: presence does not match architecture"
                    )))
                }
            }
        }
        Ok(Self {
            architecture: arch,
            layers,
            norms,
            training_seed,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn norms(&self) -> &[Option<BatchNormState>] {
        &self.norms
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.architecture.output_dim
    }

    /// Trainable tensors in a fixed order: per layer weights, bias, then
    /// batch-norm scale and shift when present.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
            if let Some(Some(bn)) = self.norms.get(l) {
                out.push(bn.scale.as_slice());
                out.push(bn.shift.as_slice());
            }
        }
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for layer in self.layers.iter_mut() {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
            if let Some(Some(bn)) = norms.next() {
                out.push(&mut bn.scale);
                out.push(&mut bn.shift);
            }
        }
        out
    }

    /// Forward pass of one input vector.
    pub fn forward(&self, x: &[f64], mode: ForwardMode<'_>) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.run(x, 1, mode).output)
    }

    /// Inference over a sequence of feature vectors. Never mutates the model.
    pub fn predict_series(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 4096;
        let d = self.input_dim();
        if let Some(i) = features.iter().position(|f| f.len() != d) {
            return Err(Error::Shape(format!(
                "feature {i} has {} values, model expects {d}",
                features[i].len()
            )));
        }
        let k = self.output_dim();
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(CHUNK) {
            let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
            let trace = self.run(&flat, chunk.len(), ForwardMode::Inference);
            out.extend(trace.output.chunks(k).map(|c| c.to_vec()));
        }
        Ok(out)
    }

    /// One output component for every feature vector.
    pub fn predict_target(&self, features: &[Vec<f64>], target: usize) -> Result<Vec<f64>> {
        if target >= self.output_dim() {
            return Err(Error::Shape(format!("model has no output {target}")));
        }
        Ok(self
            .predict_series(features)?
            .into_iter()
            .map(|o| o[target])
            .collect())
    }

    /// Forward pass over a flat row-major batch, keeping everything needed for backprop.
    pub(crate) fn run(&self, input: &[f64], n: usize, mut mode: ForwardMode<'_>) -> Trace {
        let batch_stats = matches!(mode, ForwardMode::TrainWithBatchStats(_));
        let act = self.architecture.activation;
        let p = self.architecture.dropout_rate;
        let n_hidden = self.architecture.hidden_layers.len();
        let mut hidden = Vec::with_capacity(n_hidden);
        let mut current = input.to_vec();

        for l in 0..n_hidden {
            let layer = &self.layers[l];
            let w = layer.out_dim;
            let pre = layer.forward(&current, n);
            let mut xhat = Vec::new();
            let mut inv_std = Vec::new();
            let mut batch_mean = Vec::new();
            let mut batch_var = Vec::new();
            let normed = match &self.norms[l] {
                Some(bn) => {
                    let (mean, var) = if batch_stats {
                        let (m, v) = column_stats(&pre, n, w);
                        batch_mean = m.clone();
                        batch_var = v.clone();
                        (m, v)
                    } else {
                        (bn.running_mean.clone(), bn.running_var.clone())
                    };
                    inv_std = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    xhat = vec![0.0; n * w];
                    let mut y = vec![0.0; n * w];
                    for i in 0..n {
                        for j in 0..w {
                            let h = (pre[i * w + j] - mean[j]) * inv_std[j];
                            xhat[i * w + j] = h;
                            y[i * w + j] = bn.scale[j] * h + bn.shift[j];
                        }
                    }
                    y
                }
                None => pre.clone(),
            };
            let mut activated: Vec<f64> = normed.iter().map(|&v| act.apply(v)).collect();
            let mask = match &mut mode {
                ForwardMode::TrainWithBatchStats(rng) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let m: Vec<f64> = (0..n * w)
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    for (a, s) in activated.iter_mut().zip(&m) {
                        *a *= s;
                    }
                    Some(m)
                }
                _ => None,
            };
            hidden.push(LayerTrace {
                input: std::mem::replace(&mut current, activated),
                xhat,
                normed,
                mask,
                inv_std,
                batch_mean,
                batch_var,
            });
        }
        let output = self.layers[n_hidden].forward(&current, n);
        Trace {
            n,
            batch_stats,
            hidden,
            last_input: current,
            output,
        }
    }

    /// Backpropagates `d_output` (∂loss/∂output, row-major `n × output_dim`).
    pub(crate) fn backward(&self, trace: &Trace, d_output: &[f64]) -> Grads {
        let n = trace.n;
        let act = self.architecture.activation;
        let n_hidden = trace.hidden.len();
        // Per-layer gradient slots, assembled into parameter order at the end.
        let mut dense_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n_hidden + 1);
        let mut bn_grads: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; n_hidden];

        let out_layer = &self.layers[n_hidden];
        let (dw, db, mut upstream) = dense_backward(out_layer, &trace.last_input, d_output, n);
        dense_grads.push((dw, db));

        for l in (0..n_hidden).rev() {
            let t = &trace.hidden[l];
            let layer = &self.layers[l];
            let w = layer.out_dim;
            let mut d_normed = upstream;
            if let Some(mask) = &t.mask {
                for (d, m) in d_normed.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            for (d, &v) in d_normed.iter_mut().zip(&t.normed) {
                *d *= act.derivative(v);
            }
            let d_pre = match &self.norms[l] {
                Some(bn) => {
                    let mut d_scale = vec![0.0; w];
                    let mut d_shift = vec![0.0; w];
                    let mut d_xhat = vec![0.0; n * w];
                    for i in 0..n {
                        for j in 0..w {
                            let g = d_normed[i * w + j];
                            d_scale[j] += g * t.xhat[i * w + j];
                            d_shift[j] += g;
                            d_xhat[i * w + j] = g * bn.scale[j];
                        }
                    }
                    let mut d_pre = vec![0.0; n * w];
                    if trace.batch_stats {
                        let nf = n as f64;
                        for j in 0..w {
                            let mut sum = 0.0;
                            let mut sum_x = 0.0;
                            for i in 0..n {
                                sum += d_xhat[i * w + j];
                                sum_x += d_xhat[i * w + j] * t.xhat[i * w + j];
                            }
                            for i in 0..n {
                                d_pre[i * w + j] = t.inv_std[j] / nf
                                    * (nf * d_xhat[i * w + j] - sum - t.xhat[i * w + j] * sum_x);
                            }
                        }
                    } else {
                        for i in 0..n {
                            for j in 0..w {
                                d_pre[i * w + j] = d_xhat[i * w + j] * t.inv_std[j];
                            }
                        }
                    }
                    bn_grads[l] = Some((d_scale, d_shift));
                    d_pre
                }
                None => d_normed,
            };
            let (dw, db, d_in) = dense_backward(layer, &t.input, &d_pre, n);
            dense_grads.push((dw, db));
            upstream = d_in;
        }
        dense_grads.reverse();

        let mut grads = Vec::new();
        for (l, (dw, db)) in dense_grads.into_iter().enumerate() {
            grads.push(dw);
            grads.push(db);
            if let Some(Some((ds, dsh))) = bn_grads.get_mut(l).map(Option::take) {
                grads.push(ds);
                grads.push(dsh);
            }
        }
        grads
    }

    /// Folds the batch statistics of a training pass into the running averages.
    pub(crate) fn update_running_stats(&mut self, trace: &Trace) {
        let n = trace.n as f64;
        for (bn, t) in self.norms.iter_mut().zip(&trace.hidden) {
            if let Some(bn) = bn {
                if t.batch_mean.is_empty() {
                    continue;
                }
                let unbias = if trace.n > 1 { n / (n - 1.0) } else { 1.0 };
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] =
                        BN_MOMENTUM * bn.running_mean[j] + (1.0 - BN_MOMENTUM) * t.batch_mean[j];
                    bn.running_var[j] = BN_MOMENTUM * bn.running_var[j]
                        + (1.0 - BN_MOMENTUM) * t.batch_var[j] * unbias;
                }
            }
        }
    }
}

/// Mean and biased variance of every column of an `n × w` matrix.
fn column_stats(m: &[f64], n: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut mean = vec![0.0; w];
    for i in 0..n {
        for j in 0..w {
            mean[j] += m[i * w + j];
        }
    }
    mean.iter_mut().for_each(|v| *v /= nf);
    let mut var = vec![0.0; w];
    for i in 0..n {
        for j in 0..w {
            let d = m[i * w + j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= nf);
    (mean, var)
}

/// Returns (dW, db, d_input).
fn dense_backward(layer: &Dense, input: &[f64], d_out: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (din, dout) = (layer.in_dim, layer.out_dim);
    let mut dw = vec![0.0; din * dout];
    let mut db = vec![0.0; dout];
    let mut d_in = vec![0.0; n * din];
    for i in 0..n {
        let x = &input[i * din..(i + 1) * din];
        let dx = &mut d_in[i * din..(i + 1) * din];
        for j in 0..dout {
            let g = d_out[i * dout + j];
            if g == 0.0 {
                continue;
            }
            db[j] += g;
            let wrow = &layer.weights[j * din..(j + 1) * din];
            let dwrow = &mut dw[j * din..(j + 1) * din];
            for k in 0..din {
                dwrow[k] += g * x[k];
                dx[k] += g * wrow[k];
            }
        }
    }
    (dw, db, d_in)
}

/// Mean over samples and targets of the squared error, plus its gradient
/// with respect to the outputs.
pub(crate) fn mse_and_grad(output: &[f64], target: &[f64], n: usize) -> (f64, Vec<f64>) {
    let denom = output.len() as f64;
    debug_assert_eq!(output.len(), target.len());
    debug_assert!(n > 0);
    let mut loss = 0.0;
    let grad = output
        .iter()
        .zip(target)
        .map(|(o, t)| {
            let e = o - t;
            loss += e * e;
            2.0 * e / denom
        })
        .collect();
    (loss / denom, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::arch::{preset_architecture, Activation, HiddenLayer, ModelKind};

    fn linear_arch(input_dim: usize, output_dim: usize) -> MlpArchitecture {
        MlpArchitecture {
            input_dim,
            hidden_layers: vec![],
            output_dim,
            dropout_rate: 0.0,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases_and_bounded_weights() {
        let arch = preset_architecture(ModelKind::MultiTarget);
        let a = init_model(&arch, 11).unwrap();
        let b = init_model(&arch, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(&arch, 12).unwrap());
        for (layer, (fi, fo)) in a.layers().iter().zip(arch.layer_dims()) {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let bound = glorot_bound(fi, fo);
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
        }
        assert!((glorot_bound(3, 4) - (6.0f64 / 7.0).sqrt()).abs() < 1e-15);
        for bn in a.norms().iter().flatten() {
            assert!(bn.scale.iter().all(|&s| s == 1.0));
            assert!(bn.shift.iter().all(|&s| s == 0.0));
            assert!(bn.running_mean.iter().all(|&s| s == 0.0));
            assert!(bn.running_var.iter().all(|&s| s == 1.0));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = preset_architecture(ModelKind::MultiTarget);
        let mut m = init_model(&arch, 1).unwrap();
        for layer in &mut m.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        for bn in m.norms.iter_mut().flatten() {
            bn.scale.iter_mut().for_each(|s| *s = 0.0);
        }
        let y = m.forward(&[0.3, -2.0, 5.0], ForwardMode::Inference).unwrap();
        assert_eq!(y, vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = m
            .forward(&[0.3, -2.0, 5.0], ForwardMode::TrainWithBatchStats(&mut rng))
            .unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn inference_is_repeatable_and_shaped() {
        for kind in ModelKind::BOTH {
            let m = init_model(&preset_architecture(kind), 5).unwrap();
            let x = [0.2, 0.7, 0.4];
            let a = m.forward(&x, ForwardMode::Inference).unwrap();
            let b = m.forward(&x, ForwardMode::Inference).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), kind.output_dim());
        }
    }

    #[test]
    fn single_affine_layer_matches_hand_computation() {
        let arch = linear_arch(3, 2);
        let layer = Dense {
            in_dim: 3,
            out_dim: 2,
            weights: vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0],
            bias: vec![0.25, -0.5],
        };
        let m = MlpModel::from_parts(arch, vec![layer], vec![], 0).unwrap();
        let y = m.forward(&[2.0, 1.0, 4.0], ForwardMode::Inference).unwrap();
        // [2 - 2 + 2 + 0.25, 0 + 3 - 4 - 0.5]
        assert_eq!(y, vec![2.25, -1.5]);
    }

    #[test]
    fn shape_errors() {
        let m = init_model(&preset_architecture(ModelKind::SingleTarget), 0).unwrap();
        assert!(matches!(m.forward(&[1.0, 2.0], ForwardMode::Inference), Err(Error::Shape(_))));
        assert!(m.predict_series(&[vec![1.0, 2.0, 3.0], vec![1.0]]).is_err());
        assert!(m.predict_target(&[vec![1.0, 2.0, 3.0]], 1).is_err());
    }

    #[test]
    fn predict_series_consistency() {
        let m = init_model(&preset_architecture(ModelKind::MultiTarget), 3).unwrap();
        assert!(m.predict_series(&[]).unwrap().is_empty());
        let x = vec![0.1, 0.5, 0.9];
        let single = m.forward(&x, ForwardMode::Inference).unwrap();
        let many = m.predict_series(&vec![x.clone(); 5000]).unwrap();
        assert_eq!(many.len(), 5000);
        assert!(many.iter().all(|o| *o == single));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let arch = MlpArchitecture {
            input_dim: 2,
            hidden_layers: vec![HiddenLayer { width: 2, batch_norm: true }],
            output_dim: 1,
            dropout_rate: 0.0,
            activation: Activation::Relu,
        };
        let good = init_model(&arch, 0).unwrap();
        let mut layers = good.layers().to_vec();
        layers[0].weights.pop();
        assert!(MlpModel::from_parts(arch.clone(), layers, good.norms().to_vec(), 0).is_err());
        let mut norms = good.norms().to_vec();
        norms[0].as_mut().unwrap().running_var[1] = 0.0;
        assert!(MlpModel::from_parts(arch.clone(), good.layers().to_vec(), norms, 0).is_err());
        assert!(MlpModel::from_parts(arch, good.layers().to_vec(), vec![None], 0).is_err());
    }

    #[test]
    fn dropout_masks_are_scaled() {
        let arch = MlpArchitecture {
            input_dim: 1,
            hidden_layers: vec![HiddenLayer { width: 2000, batch_norm: false }],
            output_dim: 1,
            dropout_rate: 0.25,
            activation: Activation::Identity,
        };
        let m = init_model(&arch, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = m.run(&[1.0], 1, ForwardMode::TrainWithBatchStats(&mut rng));
        let mask = t.hidden[0].mask.as_ref().unwrap();
        let dropped = mask.iter().filter(|&&v| v == 0.0).count();
        assert!(mask.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        assert!((400..600).contains(&dropped), "{dropped}");
    }
}
