//! Real-time global attention segmentation network with its training stack
//! and the grid-regulated F-beta metric.
//!
//! The tensor engine, layers and model are generic over [`Scalar`] (`f32` for
//! training, `f64` for gradient checks). Metrics are generic over [`Real`],
//! which also covers exact rationals.

pub mod blocks;
pub mod data;
pub mod engine;
pub mod error;
pub mod gam;
pub mod gradcheck;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod train;

pub use blocks::{Bottleneck, Ess, Stem, Vu, VuMode};
pub use engine::{Mode, ParamStore, Session, Shape, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use mask::SegMask;
pub use metrics::{Mgrid, MgridConfig, Real};
pub use gam::{gam_param_count, gam_residual, Gam, OutMap};
pub use model::{build_model, ModelConfig, Network, Profile, RganetModel};
pub use scalar::Scalar;
pub use train::{TrainConfig, Trainer};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = RganetModel<f32>;
pub type Model64 = RganetModel<f64>;

/// Metric configuration evaluated in exact rational arithmetic.
pub type ExactMgridConfig = MgridConfig<num_rational::BigRational>;
pub type MgridConfig64 = MgridConfig<f64>;
