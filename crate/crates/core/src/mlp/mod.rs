//! Dense feedforward normal-behaviour networks written from scratch:
//! architectures, initialization, batch-norm/dropout forward pass,
//! backpropagation, Adam training, error metrics, gradient checking and a
//! binary model file format.

mod arch;
mod gradcheck;
mod io;
mod model;
mod train;

pub use arch::{preset_architecture, Activation, HiddenLayer, MlpArchitecture, ModelKind};
pub use gradcheck::{analytic_gradient, gradient_check, GRADIENT_FLOOR};
pub use io::{decode_model, encode_model, load_model, save_model, MAGIC};
pub use model::{glorot_bound, init_model, BatchNormState, Dense, ForwardMode, MlpModel, BN_EPSILON, BN_MOMENTUM};
pub use train::{evaluate_error, train, ErrorReport, Optimizer, RegressionDataset, TrainConfig, TrainReport};
