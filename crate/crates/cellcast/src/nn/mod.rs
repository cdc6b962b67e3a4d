//! Reverse-mode autodiff engine and the recurrent bandwidth forecasters
//! built on it: a stacked LSTM with a linear head and the same stack with a
//! temporal-pattern attention head.

pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use model::{Head, LinearHead, LstmLayer, ModelKind, RecurrentModel, TpaHead, MODEL_FORMAT};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{loss_and_gradients, loss_only, train, TrainConfig, TrainLog};
