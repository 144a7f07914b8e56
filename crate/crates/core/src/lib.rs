//! Margin-gated intra-class contrastive distillation at desk scale.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`ndgrad`]), a
//! synthetic multi-view data generator ([`synthdata`]), the contrastive and
//! distillation objectives ([`losses`]), the per-class negative cache
//! ([`negcache`]), MLP teacher/student models ([`nets`]), the training loops
//! ([`train`]) and numerical checks of the distance/loss relations
//! ([`theory`]).

pub mod error;
pub mod ndgrad;
pub mod losses;
pub mod negcache;
pub mod nets;
pub mod synthdata;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use ndgrad::{grad_check, Graph, OpKind, Tensor, Var};
pub use negcache::{CacheConfig, CacheMode, NegativeCache};
pub use nets::MlpModel;
pub use synthdata::{Dataset, MultiViewSpec, Sample};
pub use theory::{BoundReport, DistanceReport, MetricsRow, SweepReport};
pub use train::{IntraSource, TrainConfig, TrainLog};
