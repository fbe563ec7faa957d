use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Mode, NnError, NodeId, Tensor2};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Scalar,
    OneHot,
}

/// A run of encoded columns with one output activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpan {
    pub start: usize,
    pub width: usize,
    pub kind: SpanKind,
}

fn check_layout(width: usize, spans: &[OutputSpan]) -> Result<(), NnError> {
    let mut at = 0;
    for s in spans {
        if s.start != at || s.width == 0 {
            return Err(NnError::shape("output activations", alloc::format!("span at {} breaks layout", s.start)));
        }
        at += s.width;
    }
    if at != width {
        return Err(NnError::shape(
            "output activations",
            alloc::format!("layout covers {at} of {width} columns"),
        ));
    }
    Ok(())
}

/// Row-wise max of `x`, as a constant broadcast to `x`'s shape.
fn row_max_shift(g: &mut Graph, x: NodeId) -> NodeId {
    let t = g.value(x);
    let (n, w) = t.shape();
    let mut shift = Tensor2::zeros(n, w);
    for r in 0..n {
        let m = t.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        shift.row_mut(r).iter_mut().for_each(|v| *v = m);
    }
    g.constant(shift)
}

fn softmax(g: &mut Graph, x: NodeId) -> Result<NodeId, NnError> {
    let w = g.shape(x).1;
    let shift = row_max_shift(g, x);
    let z = g.sub(x, shift)?;
    let e = g.exp(z);
    let s = g.row_sum(e);
    let inv = g.recip(s);
    let inv = g.broadcast_cols(inv, w)?;
    g.mul(e, inv)
}

/// Tanh on scalar spans; on one-hot spans gumbel-softmax at `temperature`
/// in train mode and the hard argmax one-hot in eval mode.
pub fn apply_output_activations<R: Rng + ?Sized>(
    g: &mut Graph,
    raw: NodeId,
    spans: &[OutputSpan],
    temperature: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId, NnError> {
    let (n, width) = g.shape(raw);
    check_layout(width, spans)?;
    let mut parts = Vec::with_capacity(spans.len());
    for s in spans {
        let x = g.slice_cols(raw, s.start, s.width)?;
        let y = match (s.kind, mode) {
            (SpanKind::Scalar, _) => g.tanh(x),
            (SpanKind::OneHot, Mode::Train) => {
                let mut noise = Tensor2::zeros(n, s.width);
                for v in noise.data_mut() {
                    // -ln(E), E ~ Exp(1)
                    let u: f64 = rng.random();
                    *v = -math::ln(-math::ln(u.max(f64::MIN_POSITIVE)));
                }
                let noise = g.constant(noise);
                let perturbed = g.add(x, noise)?;
                let scaled = g.scale(perturbed, 1.0 / temperature);
                softmax(g, scaled)?
            }
            (SpanKind::OneHot, Mode::Eval) => {
                let t = g.value(x);
                let mut hard = Tensor2::zeros(n, s.width);
                for r in 0..n {
                    hard.set(r, argmax(t.row(r)), 1.0);
                }
                g.constant(hard)
            }
        };
        parts.push(y);
    }
    g.concat_cols(&parts)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cross entropy between raw logits and target categories, summed over rows
/// and divided by the batch size. `targets[r] = (span_start, span_width,
/// category)` selects the span and class for row `r`.
pub fn conditional_cross_entropy(g: &mut Graph, raw: NodeId, targets: &[(usize, usize, usize)]) -> Result<NodeId, NnError> {
    let (n, width) = g.shape(raw);
    if targets.len() != n {
        return Err(NnError::shape("cross entropy", alloc::format!("{} targets for {} rows", targets.len(), n)));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (r, &(start, w, cat)) in targets.iter().enumerate() {
        if start + w > width || cat >= w {
            return Err(NnError::shape("cross entropy", "target outside the layout".into()));
        }
        groups.entry((start, w)).or_default().push((r, cat));
    }
    let mut total: Option<NodeId> = None;
    for ((start, w), rows) in groups {
        let idx: Arc<[usize]> = rows.iter().map(|&(r, _)| r).collect();
        let picked = g.gather_rows(raw, idx)?;
        let logits = g.slice_cols(picked, start, w)?;
        let shift = row_max_shift(g, logits);
        let z = g.sub(logits, shift)?;
        let e = g.exp(z);
        let s = g.row_sum(e);
        let lse = g.ln(s);
        let mut onehot = Tensor2::zeros(rows.len(), w);
        for (k, &(_, cat)) in rows.iter().enumerate() {
            onehot.set(k, cat, 1.0);
        }
        let onehot = g.constant(onehot);
        let target = g.mul(z, onehot)?;
        let target = g.row_sum(target);
        let ce = g.sub(lse, target)?;
        let ce = g.sum_all(ce);
        total = Some(match total {
            Some(t) => g.add(t, ce)?,
            None => ce,
        });
    }
    let total = match total {
        Some(t) => t,
        None => g.constant(Tensor2::zeros(1, 1)),
    };
    Ok(g.scale(total, 1.0 / n.max(1) as f64))
}
