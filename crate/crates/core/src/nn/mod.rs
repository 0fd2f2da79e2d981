//! Differentiable building blocks: tensors, the autodiff tape, layers, Adam.

pub mod adam;
pub mod conv;
pub mod graph;
pub mod layers;
pub mod penalty;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvGeom;
pub use graph::{Graph, Var};
pub use layers::{layer_forward, ForwardCtx, LayerSpec, ParamSet, ParamTensor, RunningStats, Sequential};
pub use penalty::{gradient_penalty, Penalty};
pub use tensor::Tensor;
