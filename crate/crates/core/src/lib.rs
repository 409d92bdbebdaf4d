//! Complex-valued transformer with holographic attention.
//!
//! Attention scores combine a real cosine similarity with a penalty on the
//! phase offset between query and key, and values are rotated by that offset
//! before being summed, so phase-consistent evidence adds up coherently.

pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod ctensor;
pub mod error;
pub mod model;
pub mod synthdata;
pub mod theory;

pub use attention::{holographic_attention, AttentionConfig, AttentionTrace};
pub use ctensor::{ComplexMatrix, RealMatrix, C64};
pub use error::{HoloError, Result};
pub use model::{HoloModel, ModelConfig, TaskKind};
