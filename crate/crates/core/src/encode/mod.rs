//! Reversible column encoders: one-hot for categorical columns,
//! mode-specific normalisation for continuous columns, and the mixed encoder
//! that gives declared special values their own one-hot slots.

mod gmm;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gmm::{em, fit_gmm, GmmConfig, GmmParams};

use crate::data::{Column, ColumnKind, ColumnSchema, RawTable, TableSchema};
use crate::nn::{OutputSpan, SpanKind, Tensor2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("non-finite value in fit input")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("cannot encode row {row} of {column}: {detail}")]
    Encoding { row: usize, column: String, detail: String },
    #[error("layout error: {0}")]
    Layout(String),
}

/// Values with `|x - s| <= SPECIAL_TOL * max(1, |s|)` count as special `s`.
pub const SPECIAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoder {
    Categorical { categories: Vec<String> },
    Continuous { gmm: GmmParams },
    Mixed { gmm: GmmParams, special: Vec<f64> },
}

impl ColumnEncoder {
    pub fn fit(schema: &ColumnSchema, column: &Column, cfg: &GmmConfig) -> Result<Self, EncodeError> {
        let bad = |detail: &str| EncodeError::Layout(format!("{}: {detail}", schema.name));
        match schema.kind {
            ColumnKind::Categorical => {
                column.as_categorical().ok_or_else(|| bad("expected categorical storage"))?;
                Ok(ColumnEncoder::Categorical {
                    categories: schema.categories.clone(),
                })
            }
            ColumnKind::Continuous => {
                let v = column.as_numeric().ok_or_else(|| bad("expected numeric storage"))?;
                Ok(ColumnEncoder::Continuous { gmm: fit_gmm(v, cfg)? })
            }
            ColumnKind::Mixed => {
                let v = column.as_numeric().ok_or_else(|| bad("expected numeric storage"))?;
                let special = schema.mixed_categorical_values.clone();
                let plain: Vec<f64> = v.iter().copied().filter(|&x| special_slot(&special, x).is_none()).collect();
                let gmm = if plain.is_empty() {
                    GmmParams {
                        weights: vec![1.0],
                        means: vec![0.0],
                        stds: vec![1.0],
                        active: vec![true],
                    }
                } else {
                    fit_gmm(&plain, cfg)?
                };
                Ok(ColumnEncoder::Mixed { gmm, special })
            }
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnEncoder::Categorical { .. } => ColumnKind::Categorical,
            ColumnEncoder::Continuous { .. } => ColumnKind::Continuous,
            ColumnEncoder::Mixed { .. } => ColumnKind::Mixed,
        }
    }

    pub fn encoded_width(&self) -> usize {
        match self {
            ColumnEncoder::Categorical { categories } => categories.len(),
            ColumnEncoder::Continuous { gmm } => 1 + gmm.n_active(),
            ColumnEncoder::Mixed { gmm, special } => 1 + gmm.n_active() + special.len(),
        }
    }

    /// Activation spans relative to the column's first encoded position.
    pub fn parts(&self) -> Vec<(usize, usize, SpanKind)> {
        match self {
            ColumnEncoder::Categorical { categories } => vec![(0, categories.len(), SpanKind::OneHot)],
            _ => vec![(0, 1, SpanKind::Scalar), (1, self.encoded_width() - 1, SpanKind::OneHot)],
        }
    }

    fn encode_number<R: Rng + ?Sized>(&self, x: f64, out: &mut [f64], rng: &mut R) {
        let (gmm, special) = match self {
            ColumnEncoder::Continuous { gmm } => (gmm, &[][..]),
            ColumnEncoder::Mixed { gmm, special } => (gmm, &special[..]),
            ColumnEncoder::Categorical { .. } => unreachable!("numeric cell in categorical encoder"),
        };
        let n_modes = gmm.n_active();
        if let Some(j) = special_slot(special, x) {
            out[1 + n_modes + j] = 1.0;
            return;
        }
        let modes = gmm.active_modes();
        let post = gmm.responsibilities(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = post.len() - 1;
        for (i, p) in post.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let k = modes[pick];
        out[0] = ((x - gmm.means[k]) / (4.0 * gmm.stds[k])).clamp(-1.0, 1.0);
        out[1 + pick] = 1.0;
    }

    fn decode_number(&self, enc: &[f64]) -> f64 {
        let (gmm, special) = match self {
            ColumnEncoder::Continuous { gmm } => (gmm, &[][..]),
            ColumnEncoder::Mixed { gmm, special } => (gmm, &special[..]),
            ColumnEncoder::Categorical { .. } => unreachable!("numeric decode of categorical encoder"),
        };
        let slot = crate::nn::argmax(&enc[1..]);
        let modes = gmm.active_modes();
        if slot >= modes.len() {
            return special[slot - modes.len()];
        }
        let k = modes[slot];
        enc[0] * 4.0 * gmm.stds[k] + gmm.means[k]
    }
}

fn special_slot(special: &[f64], x: f64) -> Option<usize> {
    special
        .iter()
        .position(|&s| (x - s).abs() <= SPECIAL_TOL * s.abs().max(1.0))
}

/// Encoded position of one source column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub name: String,
    pub kind: ColumnKind,
    pub start: usize,
    pub width: usize,
    pub parts: Vec<OutputSpan>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTable {
    pub matrix: Tensor2,
    pub layout: Vec<ColumnLayout>,
}

impl EncodedTable {
    pub fn output_spans(&self) -> Vec<OutputSpan> {
        spans_of(&self.layout)
    }

    /// Row `k` of the result is row `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> EncodedTable {
        EncodedTable {
            matrix: self.matrix.gather_rows(perm),
            layout: self.layout.clone(),
        }
    }
}

pub fn spans_of(layout: &[ColumnLayout]) -> Vec<OutputSpan> {
    layout.iter().flat_map(|c| c.parts.iter().copied()).collect()
}

/// Fitted encoders for every column of a schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEncoder {
    pub schema: TableSchema,
    pub columns: Vec<ColumnEncoder>,
}

impl TableEncoder {
    pub fn fit(table: &RawTable, cfg: &GmmConfig) -> Result<Self, EncodeError> {
        let columns = table
            .schema
            .columns
            .iter()
            .zip(&table.columns)
            .map(|(s, c)| ColumnEncoder::fit(s, c, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            schema: table.schema.clone(),
            columns,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnEncoder::encoded_width).sum()
    }

    pub fn layout(&self) -> Vec<ColumnLayout> {
        let mut start = 0;
        self.columns
            .iter()
            .zip(&self.schema.columns)
            .map(|(enc, s)| {
                let width = enc.encoded_width();
                let parts = enc
                    .parts()
                    .into_iter()
                    .map(|(off, w, kind)| OutputSpan {
                        start: start + off,
                        width: w,
                        kind,
                    })
                    .collect();
                let l = ColumnLayout {
                    name: s.name.clone(),
                    kind: s.kind,
                    start,
                    width,
                    parts,
                };
                start += width;
                l
            })
            .collect()
    }

    pub fn output_spans(&self) -> Vec<OutputSpan> {
        spans_of(&self.layout())
    }

    /// Encodes `table`, drawing each continuous cell's mode from its
    /// posterior.
    pub fn encode<R: Rng + ?Sized>(&self, table: &RawTable, rng: &mut R) -> Result<EncodedTable, EncodeError> {
        if table.schema.names() != self.schema.names() {
            return Err(EncodeError::Layout("table columns differ from the fitted schema".into()));
        }
        let layout = self.layout();
        let n = table.n_rows();
        let w = self.width();
        let mut m = Tensor2::zeros(n, w);
        for r in 0..n {
            let row = m.row_mut(r);
            for ((enc, col), l) in self.columns.iter().zip(&table.columns).zip(&layout) {
                let out = &mut row[l.start..l.start + l.width];
                match (enc, col) {
                    (ColumnEncoder::Categorical { categories }, Column::Categorical(v)) => {
                        let k = v[r] as usize;
                        if k >= categories.len() {
                            return Err(EncodeError::Encoding {
                                row: r,
                                column: l.name.clone(),
                                detail: "unseen category".into(),
                            });
                        }
                        out[k] = 1.0;
                    }
                    (ColumnEncoder::Continuous { .. } | ColumnEncoder::Mixed { .. }, Column::Numeric(v)) => {
                        enc.encode_number(v[r], out, rng);
                    }
                    _ => return Err(EncodeError::Layout(format!("{}: storage does not match encoder", l.name))),
                }
            }
        }
        Ok(EncodedTable { matrix: m, layout })
    }

    /// Decodes by argmax over one-hot spans; continuous cells invert the
    /// normalisation of the winning mode.
    pub fn decode(&self, matrix: &Tensor2, row_ids: Vec<u64>) -> Result<RawTable, EncodeError> {
        if matrix.cols() != self.width() {
            return Err(EncodeError::Layout(format!(
                "matrix width {} for an encoded width of {}",
                matrix.cols(),
                self.width()
            )));
        }
        if row_ids.len() != matrix.rows() {
            return Err(EncodeError::Layout("row id count differs from matrix rows".into()));
        }
        let layout = self.layout();
        let mut columns: Vec<Column> = self
            .columns
            .iter()
            .map(|e| match e {
                ColumnEncoder::Categorical { .. } => Column::Categorical(Vec::with_capacity(matrix.rows())),
                _ => Column::Numeric(Vec::with_capacity(matrix.rows())),
            })
            .collect();
        for r in 0..matrix.rows() {
            let row = matrix.row(r);
            for ((enc, col), l) in self.columns.iter().zip(columns.iter_mut()).zip(&layout) {
                let span = &row[l.start..l.start + l.width];
                match col {
                    Column::Categorical(v) => v.push(crate::nn::argmax(span) as u32),
                    Column::Numeric(v) => v.push(enc.decode_number(span)),
                }
            }
        }
        RawTable::new(self.schema.clone(), columns, row_ids).map_err(|e| EncodeError::Layout(format!("{e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn gauss(mean: f64, std: f64) -> GmmParams {
        GmmParams {
            weights: vec![1.0],
            means: vec![mean],
            stds: vec![std],
            active: vec![true],
        }
    }

    #[test]
    fn categorical_one_hot() {
        let schema = TableSchema::new(vec![ColumnSchema::categorical("c", &["A", "B", "C"])]).unwrap();
        let t = RawTable::new(schema, vec![Column::Categorical(vec![1])], vec![0]).unwrap();
        let enc = TableEncoder::fit(&t, &GmmConfig::default()).unwrap();
        let e = enc.encode(&t, &mut stream(0, "t", 0)).unwrap();
        assert_eq!(e.matrix.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn continuous_scalar_is_centred_and_clamped() {
        let enc = ColumnEncoder::Continuous { gmm: gauss(5.0, 2.0) };
        let mut out = [0.0; 2];
        enc.encode_number(5.0, &mut out, &mut stream(0, "t", 0));
        assert_eq!(out, [0.0, 1.0]);
        let mut out = [0.0; 2];
        enc.encode_number(13.0, &mut out, &mut stream(0, "t", 0));
        assert_eq!(out, [1.0, 1.0]);
        let mut out = [0.0; 2];
        enc.encode_number(30.0, &mut out, &mut stream(0, "t", 0));
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn mixed_special_gets_its_own_slot() {
        let enc = ColumnEncoder::Mixed {
            gmm: gauss(10.0, 1.0),
            special: vec![0.0, -1.0],
        };
        assert_eq!(enc.encoded_width(), 4);
        let mut out = [0.0; 4];
        enc.encode_number(-1.0, &mut out, &mut stream(0, "t", 0));
        assert_eq!(out, [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(enc.decode_number(&out), -1.0);
    }

    #[test]
    fn soft_output_decodes_by_argmax() {
        let schema = TableSchema::new(vec![ColumnSchema::categorical("c", &["A", "B", "C"])]).unwrap();
        let enc = TableEncoder {
            schema,
            columns: vec![ColumnEncoder::Categorical {
                categories: vec!["A".into(), "B".into(), "C".into()],
            }],
        };
        let m = Tensor2::from_vec(1, 3, vec![0.2, 0.7, 0.1]).unwrap();
        let t = enc.decode(&m, vec![0]).unwrap();
        assert_eq!(t.columns[0], Column::Categorical(vec![1]));
        let wide = Tensor2::zeros(1, 4);
        assert!(matches!(enc.decode(&wide, vec![0]), Err(EncodeError::Layout(_))));
    }
}
