use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::message::{Envelope, Message, Observer, Party, Phase};

/// Header of one delivered envelope, plus the plaintext fields an honest
/// but curious server can read off it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub round: u64,
    pub phase: Phase,
    pub sender: Party,
    pub receiver: Party,
    pub kind: String,
    pub shape: Option<(usize, usize)>,
    pub contributor: Option<usize>,
    pub idx: Option<Vec<usize>>,
    /// Set-bit position of each conditional-vector row.
    pub cv_bits: Option<Vec<usize>>,
    pub shuffle: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageLog {
    pub records: Vec<LogRecord>,
}

impl MessageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Observer for MessageLog {
    fn observe(&mut self, env: &Envelope) {
        let mut rec = LogRecord {
            round: env.round,
            phase: env.phase,
            sender: env.sender,
            receiver: env.receiver,
            kind: env.message.kind().into(),
            shape: env.message.payload().map(|t| t.shape()),
            contributor: None,
            idx: None,
            cv_bits: None,
            shuffle: None,
        };
        match &env.message {
            Message::CvRequest { contributor, .. } => rec.contributor = Some(*contributor),
            Message::CvAnnounce { cv, contributor, idx } => {
                rec.contributor = Some(*contributor);
                rec.idx = idx.clone();
                rec.cv_bits = Some(
                    (0..cv.rows())
                        .map(|r| cv.row(r).iter().position(|&v| v == 1.0).unwrap_or(usize::MAX))
                        .collect(),
                );
            }
            Message::ShuffleBarrier { shuffle, .. } => rec.shuffle = Some(*shuffle),
            _ => {}
        }
        self.records.push(rec);
    }
}

/// Routing and content rules every honest run satisfies. Returns one line
/// per violation.
pub fn hygiene_violations(log: &MessageLog) -> Vec<String> {
    let mut out = Vec::new();
    for (i, r) in log.records.iter().enumerate() {
        let from_server = r.sender == Party::Server;
        let to_server = r.receiver == Party::Server;
        if from_server == to_server {
            out.push(format!("#{i}: {} from {} to {}", r.kind, r.sender, r.receiver));
            continue;
        }
        let expected_from_server = match r.kind.as_str() {
            "cv_request" | "split_gen_logits" | "grad_down" | "synth_request" => Some(true),
            "cv_announce" | "bottom_disc_logits" | "grad_up" | "synth_rows" => Some(false),
            _ => None,
        };
        if let Some(e) = expected_from_server {
            if e != from_server {
                out.push(format!("#{i}: {} travelling the wrong way", r.kind));
            }
        }
        if r.kind == "cv_announce" {
            if r.sender != Party::Client(r.contributor.unwrap_or(usize::MAX)) {
                out.push(format!("#{i}: announcement from a non-contributor"));
            }
            let in_disc = matches!(r.phase, Phase::Disc(_));
            if r.idx.is_some() != in_disc {
                out.push(format!("#{i}: row indices present={} in {:?}", r.idx.is_some(), r.phase));
            }
            if r.cv_bits.as_ref().is_some_and(|b| b.contains(&usize::MAX)) {
                out.push(format!("#{i}: conditional vector row without a set bit"));
            }
        }
        if r.kind == "synth_rows" && r.phase != Phase::Synth {
            out.push(format!("#{i}: synthetic rows outside synthesis"));
        }
    }
    out
}
