//! Dense `f32` tensor ops with exact reverse-mode gradients.

pub mod checkpoint;
mod graph;
pub mod kernels;
mod params;

pub use graph::{BnConfig, Graph, Var};
pub use kernels::BatchStats;
pub use params::{ParamId, ParamStore, Parameter};
