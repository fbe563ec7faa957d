//! The honest-but-curious server: collect every `(cv bit, row index)` pair
//! announced during discriminator steps, group bits into columns, and read
//! off a positional reconstruction of the clients' categorical cells.
//!
//! Row positions are only comparable between two shuffle barriers, so
//! observations carry the window they were made in. Column inference uses
//! co-coverage within a window; cell assignment pools all windows and marks
//! rows that received two different categories as unknown.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cond::CvLayout;
use crate::data::RawTable;
use crate::protocol::{MessageLog, Party, Phase};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("layout mismatch: {0}")]
    Layout(String),
}

/// One `(bit, row)` pair seen in window `window` during round `round`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub window: u64,
    pub round: u64,
    pub bit: usize,
    pub row: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerView {
    pub observations: BTreeSet<Observation>,
}

impl ServerView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, window: u64, round: u64, bit: usize, rows: &[usize]) {
        for &row in rows {
            self.observations.insert(Observation { window, round, bit, row });
        }
    }

    /// Everything the server reads off the log: announced cv bits with
    /// their row indices, and the shuffle flag of each barrier.
    pub fn from_log(log: &MessageLog) -> Self {
        let mut view = Self::new();
        let mut window = 0;
        let mut last_shuffle = None;
        for r in &log.records {
            if r.receiver != Party::Server {
                continue;
            }
            if r.phase == Phase::Shuffle && r.shuffle == Some(true) && last_shuffle != Some(r.round) {
                last_shuffle = Some(r.round);
                window += 1;
            }
            if let (Some(bits), Some(idx)) = (&r.cv_bits, &r.idx) {
                for (&bit, &row) in bits.iter().zip(idx) {
                    view.observe(window, r.round, bit, &[row]);
                }
            }
        }
        view
    }

    /// Observations made before round `round`.
    pub fn truncated(&self, round: u64) -> Self {
        Self {
            observations: self.observations.iter().filter(|o| o.round < round).copied().collect(),
        }
    }

    pub fn last_round(&self) -> Option<u64> {
        self.observations.iter().map(|o| o.round).max()
    }

    pub fn bits(&self) -> BTreeSet<usize> {
        self.observations.iter().map(|o| o.bit).collect()
    }

    fn rows_by_window(&self) -> BTreeMap<(u64, usize), BTreeSet<usize>> {
        let mut out: BTreeMap<(u64, usize), BTreeSet<usize>> = BTreeMap::new();
        for o in &self.observations {
            out.entry((o.window, o.row)).or_default().insert(o.bit);
        }
        out
    }

    /// Groups bits into columns: one-hot blocks are contiguous and two bits
    /// of one column never cover the same row within a window, so bits are
    /// taken in order and a new column starts at the first co-coverage.
    pub fn infer_columns(&self) -> Vec<Vec<usize>> {
        let mut together: BTreeSet<(usize, usize)> = BTreeSet::new();
        for bits in self.rows_by_window().values() {
            for &a in bits {
                for &b in bits {
                    if a < b {
                        together.insert((a, b));
                    }
                }
            }
        }
        let mut columns: Vec<Vec<usize>> = Vec::new();
        for bit in self.bits() {
            match columns.last_mut() {
                Some(c) if c.iter().all(|&a| !together.contains(&(a, bit))) => c.push(bit),
                _ => columns.push(vec![bit]),
            }
        }
        columns
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredColumn {
    pub bits: Vec<usize>,
    /// Per row: the single bit that covered it, or `None` when it was
    /// never covered or covered by two different bits.
    pub cells: Vec<Option<usize>>,
    pub conflicts: usize,
    /// Share of assigned rows per bit, in `bits` order.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub n_rows: usize,
    pub columns: Vec<InferredColumn>,
}

impl ReconstructionReport {
    pub fn confident_cells(&self) -> usize {
        self.columns.iter().map(|c| c.cells.iter().flatten().count()).sum()
    }
}

pub fn reconstruct(view: &ServerView, n_rows: usize) -> ReconstructionReport {
    let mut columns = Vec::new();
    for bits in view.infer_columns() {
        let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_rows];
        for o in &view.observations {
            if o.row < n_rows && bits.contains(&o.bit) {
                seen[o.row].insert(o.bit);
            }
        }
        let conflicts = seen.iter().filter(|s| s.len() > 1).count();
        let cells: Vec<Option<usize>> = seen
            .iter()
            .map(|s| if s.len() == 1 { s.first().copied() } else { None })
            .collect();
        let assigned = cells.iter().flatten().count();
        let ratios = bits
            .iter()
            .map(|b| {
                let k = cells.iter().filter(|c| **c == Some(*b)).count();
                if assigned == 0 {
                    0.0
                } else {
                    k as f64 / assigned as f64
                }
            })
            .collect();
        columns.push(InferredColumn {
            bits,
            cells,
            conflicts,
            ratios,
        });
    }
    ReconstructionReport { n_rows, columns }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub confident_cells: usize,
    pub correct: usize,
    /// Confident cells over all categorical cells of the truth.
    pub coverage: f64,
    /// `None` when no cell is confidently assigned.
    pub accuracy: Option<f64>,
    /// Expected accuracy of the same claims against a uniformly reordered
    /// truth, and its variance.
    pub baseline: Option<f64>,
    pub baseline_variance: Option<f64>,
}

/// Scores the report against the clients' tables (positional rows).
pub fn score(report: &ReconstructionReport, truth: &[RawTable], layout: &CvLayout) -> Result<AttackScore, AttackError> {
    if truth.len() != layout.n_clients {
        return Err(AttackError::Layout(format!("{} tables for {} clients", truth.len(), layout.n_clients)));
    }
    if truth.iter().any(|t| t.n_rows() != report.n_rows) {
        return Err(AttackError::Layout("truth row count differs from the report".into()));
    }
    let mut correct = 0;
    let mut m = 0;
    let mut p_sum = 0.0;
    let mut var_sum = 0.0;
    for col in &report.columns {
        for (row, cell) in col.cells.iter().enumerate() {
            let Some(bit) = *cell else { continue };
            let span = layout
                .span_of_bit(bit)
                .ok_or_else(|| AttackError::Layout(format!("bit {bit} outside the cv layout")))?;
            let values = truth[span.client].columns[span.column_index]
                .as_categorical()
                .ok_or_else(|| AttackError::Layout(format!("column {} is not categorical", span.column)))?;
            let cat = (bit - span.offset) as u32;
            m += 1;
            if values[row] == cat {
                correct += 1;
            }
            let p = values.iter().filter(|&&v| v == cat).count() as f64 / values.len() as f64;
            p_sum += p;
            var_sum += p * (1.0 - p);
        }
    }
    let total = report.n_rows * layout.spans.len();
    let (accuracy, baseline, baseline_variance) = if m == 0 {
        (None, None, None)
    } else {
        let mf = m as f64;
        (Some(correct as f64 / mf), Some(p_sum / mf), Some(var_sum / (mf * mf)))
    };
    Ok(AttackScore {
        confident_cells: m,
        correct,
        coverage: if total == 0 { 0.0 } else { m as f64 / total as f64 },
        accuracy,
        baseline,
        baseline_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_view() -> ServerView {
        let mut v = ServerView::new();
        v.observe(0, 0, 0, &[0, 1, 2]);
        v.observe(0, 1, 1, &[3, 4, 5]);
        v.observe(0, 2, 2, &[0, 1]);
        v.observe(0, 3, 3, &[2, 3, 4, 5]);
        v
    }

    #[test]
    fn four_announcements_give_two_columns() {
        let v = toy_view();
        assert_eq!(v.infer_columns(), vec![vec![0, 1], vec![2, 3]]);
        let r = reconstruct(&v, 6);
        assert_eq!(r.columns[0].ratios, vec![0.5, 0.5]);
        let c2 = &r.columns[1].ratios;
        assert!((c2[0] - 1.0 / 3.0).abs() < 1e-12 && (c2[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confident_cells(), 12);
    }

    #[test]
    fn single_observation_and_idempotence() {
        let mut v = ServerView::new();
        v.observe(0, 0, 4, &[1, 2]);
        assert_eq!(v.infer_columns(), vec![vec![4]]);
        let before = reconstruct(&v, 3);
        v.observe(0, 0, 4, &[1, 2]);
        assert_eq!(reconstruct(&v, 3), before);
        assert_eq!(before.confident_cells(), 2);
        assert!(reconstruct(&ServerView::new(), 3).columns.is_empty());
    }

    #[test]
    fn conflicts_become_unknown() {
        let mut v = ServerView::new();
        v.observe(0, 0, 0, &[0]);
        v.observe(1, 1, 1, &[0]);
        let r = reconstruct(&v, 1);
        assert_eq!(r.columns.len(), 1);
        assert_eq!(r.columns[0].cells, vec![None]);
        assert_eq!(r.columns[0].conflicts, 1);
    }
}
