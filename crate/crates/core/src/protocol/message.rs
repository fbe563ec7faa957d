use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::nn::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Server,
    Client(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Server => write!(f, "server"),
            Party::Client(i) => write!(f, "client{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Discriminator update `k` of the round.
    Disc(u32),
    Gen,
    Shuffle,
    Synth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Fake,
    Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    CvRequest { contributor: usize, batch: usize },
    /// `idx` is present only in the discriminator phase.
    CvAnnounce { cv: Tensor2, contributor: usize, idx: Option<Vec<usize>> },
    SplitGenLogits { piece: Tensor2 },
    BottomDiscLogits { path: Path, logits: Tensor2 },
    GradDown { path: Path, grad: Tensor2 },
    /// Gradient with respect to the generator piece, plus the contributor's
    /// conditional loss (zero at other clients).
    GradUp { grad: Tensor2, cond_loss: f64 },
    ShuffleBarrier { round: u64, shuffle: bool },
    SynthRequest { n: usize },
    /// Published synthetic rows: category index or value per column.
    SynthRows { rows: Tensor2 },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::CvRequest { .. } => "cv_request",
            Message::CvAnnounce { .. } => "cv_announce",
            Message::SplitGenLogits { .. } => "split_gen_logits",
            Message::BottomDiscLogits { .. } => "bottom_disc_logits",
            Message::GradDown { .. } => "grad_down",
            Message::GradUp { .. } => "grad_up",
            Message::ShuffleBarrier { .. } => "shuffle_barrier",
            Message::SynthRequest { .. } => "synth_request",
            Message::SynthRows { .. } => "synth_rows",
        }
    }

    /// The matrix payload, if any.
    pub fn payload(&self) -> Option<&Tensor2> {
        match self {
            Message::CvAnnounce { cv, .. } => Some(cv),
            Message::SplitGenLogits { piece } => Some(piece),
            Message::BottomDiscLogits { logits, .. } => Some(logits),
            Message::GradDown { grad, .. } | Message::GradUp { grad, .. } => Some(grad),
            Message::SynthRows { rows } => Some(rows),
            Message::CvRequest { .. } | Message::ShuffleBarrier { .. } | Message::SynthRequest { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub round: u64,
    pub phase: Phase,
    pub sender: Party,
    pub receiver: Party,
    pub message: Message,
}

/// Ordered, reliable delivery between parties.
pub trait Transport {
    fn send(&mut self, env: Envelope) -> Result<(), ProtocolError>;
    /// Next envelope in global send order, if any is pending.
    fn next(&mut self) -> Result<Option<Envelope>, ProtocolError>;
}

/// Receives a copy of every delivered envelope.
pub trait Observer {
    fn observe(&mut self, env: &Envelope);
}

impl Observer for () {
    fn observe(&mut self, _: &Envelope) {}
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn observe(&mut self, env: &Envelope) {
        self.0.observe(env);
        self.1.observe(env);
    }
}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn observe(&mut self, env: &Envelope) {
        (**self).observe(env);
    }
}

/// A single FIFO queue shared by all parties.
#[derive(Default)]
pub struct InProcess {
    queue: VecDeque<Envelope>,
}

impl InProcess {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcess {
    fn send(&mut self, env: Envelope) -> Result<(), ProtocolError> {
        self.queue.push_back(env);
        Ok(())
    }

    fn next(&mut self) -> Result<Option<Envelope>, ProtocolError> {
        Ok(self.queue.pop_front())
    }
}
