//! The training protocol: one server and `N` clients, each owning shards of
//! the generator and discriminator, exchanging envelopes over a
//! [`Transport`] in lock step.
//!
//! A round is `disc_epochs` discriminator updates followed by one generator
//! update and then the shuffle barrier, at which every client permutes its
//! rows with the permutation derived from the shared seed.

mod client;
mod log;
mod message;
mod plan;
mod server;
mod session;

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub use client::{ClientData, ClientState};
pub use log::{hygiene_violations, LogRecord, MessageLog};
pub use message::{Envelope, InProcess, Message, Observer, Party, Path, Phase, Transport};
pub use plan::{
    client_widths, concat_logits, plan_partition, split_logits, PartitionConfig, PartitionPlan, ShardSpecs, DROPOUT,
    LEAKY_SLOPE,
};
pub use server::{ServerState, StepRecord};
pub(crate) use server::normal_noise;
pub use session::{matrix_to_table, prepare_clients, Federation};

use crate::cond::ConditioningError;
use crate::data::DataError;
use crate::encode::{EncodeError, GmmConfig};
use crate::nn::{AdamConfig, AdamState, Net, NnError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("partition plan: {0}")]
    Plan(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error("{party} out of sync: {detail}")]
    Desync { party: String, detail: String },
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("non-finite loss in {0}")]
    NonFinite(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl ProtocolError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ProtocolError::NonFinite(_) | ProtocolError::Nn(NnError::NonFinite(_)))
    }

    pub fn is_desync(&self) -> bool {
        matches!(self, ProtocolError::Desync { .. })
    }
}

/// Root seeds; every party derives its named streams from these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub server: u64,
    pub clients: u64,
    /// Shared among clients only.
    pub shuffle: u64,
    /// Shared among clients only; orders the published synthetic rows.
    pub publication: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            server: 1,
            clients: 2,
            shuffle: 3,
            publication: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub rounds: u64,
    pub disc_epochs: u32,
    pub batch: usize,
    pub noise_dim: usize,
    pub seeds: Seeds,
    pub adam: AdamConfig,
    pub lambda: f64,
    pub temperature: f64,
    pub conditional_loss: bool,
    pub shuffle: bool,
    pub gmm: GmmConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            disc_epochs: 5,
            batch: 500,
            noise_dim: 128,
            seeds: Seeds::default(),
            adam: AdamConfig::default(),
            lambda: 10.0,
            temperature: 0.2,
            conditional_loss: true,
            shuffle: true,
            gmm: GmmConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// Rounds covering `epochs` passes over `n_rows` rows.
    pub fn rounds_for_epochs(epochs: u64, n_rows: usize, batch: usize) -> u64 {
        epochs * n_rows.div_ceil(batch.max(1)) as u64
    }

    pub fn validate(&self, n_rows: usize) -> Result<(), ProtocolError> {
        if self.disc_epochs == 0 {
            return Err(ProtocolError::Config("disc_epochs must be at least 1".into()));
        }
        if self.batch < 2 {
            return Err(ProtocolError::Config("batch must be at least 2".into()));
        }
        if self.batch > n_rows {
            return Err(ProtocolError::Config(alloc::format!(
                "batch {} exceeds the {} available rows",
                self.batch,
                n_rows
            )));
        }
        if self.noise_dim == 0 {
            return Err(ProtocolError::Config("noise_dim must be positive".into()));
        }
        if !(self.temperature > 0.0) || !(self.lambda >= 0.0) || !(self.adam.lr > 0.0) {
            return Err(ProtocolError::Config("temperature, lambda and lr must be positive".into()));
        }
        Ok(())
    }
}

/// A network and its optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub net: Net,
    pub adam: AdamState,
}

impl Shard {
    pub fn new(net: Net) -> Self {
        let adam = AdamState::new(net.num_params());
        Self { net, adam }
    }

    pub fn has_params(&self) -> bool {
        self.net.num_params() > 0
    }

    pub fn update(&mut self, grads: &crate::nn::GradBuffer, cfg: &AdamConfig) -> Result<(), ProtocolError> {
        if !grads.is_finite() {
            return Err(ProtocolError::NonFinite("parameter gradient".into()));
        }
        self.net.adam_step(grads, &mut self.adam, cfg)?;
        Ok(())
    }
}
