//! Minimal tensor stack and the super-resolution networks built on it.

mod arch;
pub mod checkpoint;
mod model;
pub mod ops;
mod tensor;

pub use arch::{architectures, Architecture, ArchitectureCtor, ResNet, Srcnn, FINAL_LAYER_GAIN};
pub use model::{Activation, Blueprint, Init, Mode, Model, ModelConfig, Op, Param, ParamSpec, Trace};
pub use tensor::Tensor4;
