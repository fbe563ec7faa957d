//! Small f64 network kernel: tensors, a define-by-run autodiff graph,
//! dense/batchnorm/activation/dropout layers grouped into blocks, Adam, the
//! WGAN gradient penalty and generator output activations.

mod activations;
mod adam;
pub mod gradcheck;
mod graph;
mod net;
mod penalty;
mod tensor;

use alloc::string::String;

pub use activations::{apply_output_activations, argmax, conditional_cross_entropy, OutputSpan, SpanKind};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Graph, NodeId};
pub use net::{
    BatchNormStats, BlockSpec, Built, GradBuffer, LayerSpec, Net, NetSpec, ParamView, Params, Residual, Tape,
};
pub use penalty::{gradient_penalty, penalty_from_input};
pub use tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tape recorded at parameter generation {recorded}, network is at {current}")]
    StaleTape { recorded: u64, current: u64 },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

impl NnError {
    pub fn shape(op: &'static str, detail: String) -> Self {
        NnError::Shape { op, detail }
    }
}
