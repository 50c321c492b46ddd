use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative evaluated at the pre-activation `v` (0 at the ReLU kink).
    #[inline]
    pub(crate) fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Which normal-behaviour model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Predicts gear bearing, hydraulic oil and transformer winding temperature.
    MultiTarget,
    /// Predicts the gear bearing temperature only.
    SingleTarget,
}

impl ModelKind {
    pub const BOTH: [ModelKind; 2] = [ModelKind::SingleTarget, ModelKind::MultiTarget];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MultiTarget => "multi_target",
            ModelKind::SingleTarget => "single_target",
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            ModelKind::MultiTarget => 3,
            ModelKind::SingleTarget => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub batch_norm: bool,
}

/// Shape and regularization of a dense regression network.
///
/// Each hidden layer is `affine -> [batch norm] -> activation -> dropout`;
/// the output layer is affine with no activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<HiddenLayer>,
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Shape("input and output dimensions must be at least 1".into()));
        }
        if let Some(i) = self.hidden_layers.iter().position(|h| h.width == 0) {
            return Err(Error::Shape(format!("hidden layer {i} has zero width")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut prev = self.input_dim;
        for h in &self.hidden_layers {
            dims.push((prev, h.width));
            prev = h.width;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// The two normal-behaviour architectures: 3 inputs, batch norm on every
/// hidden layer, 10 % dropout, rectifier activations.
pub fn preset_architecture(kind: ModelKind) -> MlpArchitecture {
    let widths: &[usize] = match kind {
        ModelKind::MultiTarget => &[4, 19],
        ModelKind::SingleTarget => &[4, 4, 5],
    };
    MlpArchitecture {
        input_dim: 3,
        hidden_layers: widths
            .iter()
            .map(|&width| HiddenLayer {
                width,
                batch_norm: true,
            })
            .collect(),
        output_dim: kind.output_dim(),
        dropout_rate: 0.10,
        activation: Activation::Relu,
    }
}
