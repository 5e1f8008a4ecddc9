//! From-scratch recurrent-network training toolkit.
//!
//! Implements four sequence-labeling architectures (a vanilla RNN, the
//! standard peephole LSTM, the recurrent-projection LSTM and the
//! dual-projection LSTM) together with truncated backpropagation through
//! time, lane-based subsequence scheduling with state carry-over, and
//! lock-free asynchronous multi-worker SGD over a shared parameter store.
//!
//! All numeric kernels are generic over the [`Scalar`] type (`f32` or
//! `f64`); concrete aliases for the common instantiations live at the crate
//! root. Double precision is the reference build used by the
//! finite-difference gradient checks.

pub mod cells;
pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod linalg;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use cells::{ArchKind, ArchSpec, CellState, ModelParams, StepCache};
pub use grad::{ClipPolicy, Gradients};
pub use train::{LrSchedule, TrainConfig};

/// Concrete aliases for the two supported precisions.
pub type Vector32 = linalg::Vector<f32>;
pub type Vector64 = linalg::Vector<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ModelParams32 = cells::ModelParams<f32>;
pub type ModelParams64 = cells::ModelParams<f64>;
pub type Gradients32 = grad::Gradients<f32>;
pub type Gradients64 = grad::Gradients<f64>;
pub type CellState32 = cells::CellState<f32>;
pub type CellState64 = cells::CellState<f64>;
