use super::model::{mse_and_grad, ForwardMode, MlpModel};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared absolutely rather than relatively;
/// central differences cannot resolve them against the rounding of the loss.
pub const GRADIENT_FLOOR: f64 = 1e-7;

fn frozen_loss(model: &MlpModel, x: &[f64], y: &[f64]) -> f64 {
    let t = model.run(x, 1, ForwardMode::Inference);
    mse_and_grad(&t.output, y, 1).0
}

/// Analytic gradient of the single-sample loss with batch norm frozen at its
/// running statistics and dropout disabled, in [`MlpModel::params`] order.
pub fn analytic_gradient(model: &MlpModel, x: &[f64], y: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_shapes(model, x, y)?;
    let trace = model.run(x, 1, ForwardMode::Inference);
    let (_, d_out) = mse_and_grad(&trace.output, y, 1);
    Ok(model.backward(&trace, &d_out))
}

fn check_shapes(model: &MlpModel, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != model.input_dim() || y.len() != model.output_dim() {
        return Err(Error::Shape(format!(
            "expected ({}, {}) got ({}, {})",
            model.input_dim(),
            model.output_dim(),
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Maximum over all trainable parameters of
/// `|analytic − numeric| / max(|analytic|, |numeric|, GRADIENT_FLOOR)`,
/// with the numeric gradient from central differences of step `epsilon`.
pub fn gradient_check(model: &MlpModel, x: &[f64], y: &[f64], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let analytic = analytic_gradient(model, x, y)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let original = probe.params_mut()[t][i];
            probe.params_mut()[t][i] = original + epsilon;
            let plus = frozen_loss(&probe, x, y);
            probe.params_mut()[t][i] = original - epsilon;
            let minus = frozen_loss(&probe, x, y);
            probe.params_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad[i];
            let denom = a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::arch::{preset_architecture, Activation, MlpArchitecture, ModelKind};
    use crate::mlp::model::{init_model, Dense};
    use proptest::prelude::*;

    #[test]
    fn zero_network_has_zero_deviation() {
        let arch = preset_architecture(ModelKind::SingleTarget);
        let mut m = init_model(&arch, 0).unwrap();
        for p in m.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let dev = gradient_check(&m, &[0.1, 0.2, 0.3], &[0.0], 1e-5).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn linear_layer_matches_closed_form() {
        let arch = MlpArchitecture {
            input_dim: 3,
            hidden_layers: vec![],
            output_dim: 2,
            dropout_rate: 0.0,
            activation: Activation::Identity,
        };
        let w = vec![0.3, -1.2, 0.7, 2.0, 0.1, -0.4];
        let b = vec![0.05, -0.3];
        let m = MlpModel::from_parts(
            arch,
            vec![Dense { in_dim: 3, out_dim: 2, weights: w.clone(), bias: b.clone() }],
            vec![],
            0,
        )
        .unwrap();
        let x = [0.5, -1.0, 2.0];
        let y = [1.0, -0.5];
        let g = analytic_gradient(&m, &x, &y).unwrap();
        for j in 0..2 {
            let pred: f64 = b[j] + (0..3).map(|k| w[j * 3 + k] * x[k]).sum::<f64>();
            let r = 2.0 * (pred - y[j]) / 2.0;
            for k in 0..3 {
                assert!((g[0][j * 3 + k] - r * x[k]).abs() < 1e-8);
            }
            assert!((g[1][j] - r).abs() < 1e-8);
        }
        assert!(gradient_check(&m, &x, &y, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_bad_epsilon_and_shapes() {
        let m = init_model(&preset_architecture(ModelKind::MultiTarget), 0).unwrap();
        assert!(gradient_check(&m, &[0.0; 3], &[0.0; 3], 0.0).is_err());
        assert!(gradient_check(&m, &[0.0; 3], &[0.0; 1], 1e-5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn presets_pass_finite_differences(
            seed in any::<u64>(),
            multi in any::<bool>(),
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let kind = if multi { ModelKind::MultiTarget } else { ModelKind::SingleTarget };
            let m = init_model(&preset_architecture(kind), seed).unwrap();
            // finite differences straddling a ReLU kink measure a one-sided slope
            let margin = m.run(&x, 1, ForwardMode::Inference).activation_margin();
            prop_assume!(margin > 1e-3);
            let dev = gradient_check(&m, &x, &y[..kind.output_dim()], 1e-5).unwrap();
            prop_assert!(dev < 1e-4, "deviation {dev}");
        }
    }
}
