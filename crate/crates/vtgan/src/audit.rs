//! Scans every matrix on the wire for exact copies of the clients' numeric
//! cells.

use std::collections::HashSet;

use vtgan_core::data::{Column, ColumnKind, RawTable};
use vtgan_core::protocol::{Envelope, Observer};

/// Observer that flags any payload entry bit-identical to a raw numeric
/// cell. Schema constants (mixed-column special values) and 0, ±1 are not
/// considered raw since they occur in one-hots and masks.
#[derive(Debug, Default)]
pub struct PayloadAudit {
    raw: HashSet<u64>,
    pub scanned: u64,
    pub hits: Vec<String>,
}

impl PayloadAudit {
    pub fn new(tables: &[&RawTable]) -> Self {
        let mut constants: Vec<f64> = vec![0.0, -0.0, 1.0, -1.0];
        let mut raw = HashSet::new();
        for t in tables {
            for (schema, col) in t.schema.columns.iter().zip(&t.columns) {
                if schema.kind == ColumnKind::Categorical {
                    continue;
                }
                constants.extend(&schema.mixed_categorical_values);
                if let Column::Numeric(values) = col {
                    raw.extend(values.iter().map(|v| v.to_bits()));
                }
            }
        }
        for c in constants {
            raw.remove(&c.to_bits());
        }
        Self {
            raw,
            scanned: 0,
            hits: Vec::new(),
        }
    }

    pub fn raw_values(&self) -> usize {
        self.raw.len()
    }
}

impl Observer for PayloadAudit {
    fn observe(&mut self, env: &Envelope) {
        let Some(t) = env.message.payload() else { return };
        self.scanned += t.data().len() as u64;
        for &v in t.data() {
            if self.raw.contains(&v.to_bits()) && self.hits.len() < 100 {
                self.hits.push(format!(
                    "{} {}->{} round {} carries raw value {v}",
                    env.message.kind(),
                    env.sender,
                    env.receiver,
                    env.round
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vtgan_core::fixtures;
    use vtgan_core::nn::Tensor2;
    use vtgan_core::protocol::{Message, Party, Phase};

    #[test]
    fn planted_value_is_caught() {
        let (t, _) = fixtures::correlated(20, 3).unwrap();
        let mut audit = PayloadAudit::new(&[&t]);
        assert!(audit.raw_values() > 20);
        let leak = t.columns[0].as_numeric().unwrap()[5];
        let env = |v: f64| Envelope {
            round: 0,
            phase: Phase::Gen,
            sender: Party::Client(0),
            receiver: Party::Server,
            message: Message::SplitGenLogits {
                piece: Tensor2::from_vec(1, 3, vec![0.0, 1.0, v]).unwrap(),
            },
        };
        audit.observe(&env(0.123456789));
        assert!(audit.hits.is_empty());
        audit.observe(&env(leak));
        assert_eq!(audit.hits.len(), 1);
        assert_eq!(audit.scanned, 6);
    }
}
