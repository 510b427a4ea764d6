//! Patch-level adaptive multi-condition control for a toy rectified-flow
//! diffusion transformer, end to end on procedurally generated scenes.

pub mod backbone;
pub mod control;
pub mod error;
pub mod eval;
pub mod fft;
pub mod gradcheck;
pub mod linalg;
pub mod nn;
pub mod pam;
pub mod params;
pub mod pipeline;
pub mod select;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use params::ParameterStore;
pub use synth::{ConditionKind, ImageSample, SceneSpec};
pub use tensor::{NoGradGuard, Tensor};
