//! Conditional vectors: contributor selection by the ratio vector, column
//! and category choice at the contributor, and the cv filter network.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnAssignment, ColumnKind, RawTable, TableSchema};
use crate::math;
use crate::nn::{BlockSpec, LayerSpec, NetSpec, Residual, Tensor2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConditioningError {
    #[error("assignment error: {0}")]
    Assignment(String),
    #[error("no client holds a categorical column")]
    Unavailable,
    #[error("client {0} has no categorical column")]
    NotACandidate(usize),
    #[error("layout error: {0}")]
    Layout(String),
}

/// Per-client share of the feature columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RatioVector(pub Vec<f64>);

impl RatioVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_ratio_vector(assignment: &ColumnAssignment) -> Result<RatioVector, ConditioningError> {
    if assignment.clients.is_empty() {
        return Err(ConditioningError::Assignment("no clients".into()));
    }
    if let Some(i) = assignment.clients.iter().position(Vec::is_empty) {
        return Err(ConditioningError::Assignment(format!("client {i} holds no columns")));
    }
    let total: usize = assignment.clients.iter().map(Vec::len).sum();
    Ok(RatioVector(
        assignment
            .clients
            .iter()
            .map(|c| c.len() as f64 / total as f64)
            .collect(),
    ))
}

/// One categorical column's block of bits in the conditional vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSpan {
    pub client: usize,
    pub column: String,
    /// Position of the column in the client's table.
    pub column_index: usize,
    pub n_categories: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvLayout {
    pub spans: Vec<CvSpan>,
    pub width: usize,
    pub n_clients: usize,
}

impl CvLayout {
    /// Spans for every pure categorical column, clients in order.
    pub fn new(client_schemas: &[TableSchema]) -> Self {
        let mut spans = Vec::new();
        let mut offset = 0;
        for (client, s) in client_schemas.iter().enumerate() {
            for (column_index, c) in s.columns.iter().enumerate() {
                if c.kind == ColumnKind::Categorical {
                    spans.push(CvSpan {
                        client,
                        column: c.name.clone(),
                        column_index,
                        n_categories: c.categories.len(),
                        offset,
                    });
                    offset += c.categories.len();
                }
            }
        }
        Self {
            spans,
            width: offset,
            n_clients: client_schemas.len(),
        }
    }

    pub fn client_spans(&self, client: usize) -> Vec<&CvSpan> {
        self.spans.iter().filter(|s| s.client == client).collect()
    }

    pub fn is_candidate(&self, client: usize) -> bool {
        self.spans.iter().any(|s| s.client == client)
    }

    /// Span containing `bit`.
    pub fn span_of_bit(&self, bit: usize) -> Option<&CvSpan> {
        self.spans
            .iter()
            .find(|s| bit >= s.offset && bit < s.offset + s.n_categories)
    }

    /// The ratio vector restricted to clients with a categorical column and
    /// renormalised.
    pub fn contributor_probabilities(&self, ratio: &RatioVector) -> Result<Vec<f64>, ConditioningError> {
        if ratio.len() != self.n_clients {
            return Err(ConditioningError::Layout(format!(
                "{} ratios for {} clients",
                ratio.len(),
                self.n_clients
            )));
        }
        let masked: Vec<f64> = (0..self.n_clients)
            .map(|i| if self.is_candidate(i) { ratio.0[i] } else { 0.0 })
            .collect();
        let total: f64 = masked.iter().sum();
        if total <= 0.0 {
            return Err(ConditioningError::Unavailable);
        }
        Ok(masked.into_iter().map(|p| p / total).collect())
    }

    pub fn sample_contributor<R: Rng + ?Sized>(&self, ratio: &RatioVector, rng: &mut R) -> Result<usize, ConditioningError> {
        let p = self.contributor_probabilities(ratio)?;
        let dist = WeightedIndex::new(&p).map_err(|_| ConditioningError::Unavailable)?;
        Ok(dist.sample(rng))
    }
}

/// Row positions per category for each of a client's categorical columns.
/// Must be rebuilt whenever the client's rows are permuted.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryIndex {
    /// `(column_index, rows_by_category)` for each categorical column.
    pub columns: Vec<(usize, Vec<Vec<usize>>)>,
}

impl CategoryIndex {
    pub fn new(table: &RawTable) -> Self {
        let columns = table
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Categorical)
            .map(|(j, c)| {
                let mut rows = vec![Vec::new(); c.categories.len()];
                let v = table.columns[j].as_categorical().expect("categorical storage");
                for (r, &k) in v.iter().enumerate() {
                    rows[k as usize].push(r);
                }
                (j, rows)
            })
            .collect();
        Self { columns }
    }

    /// Sampling probabilities `log(1 + count)`, normalised.
    pub fn category_probabilities(rows: &[Vec<usize>]) -> Vec<f64> {
        let w: Vec<f64> = rows.iter().map(|r| math::ln(1.0 + r.len() as f64)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// One batch of conditional vectors and the rows that carry them.
#[derive(Clone, Debug, PartialEq)]
pub struct CvDraw {
    pub cv_batch: Tensor2,
    pub contributor: usize,
    pub idx_batch: Vec<usize>,
    /// `(column_index within the contributor's table, category)` per row.
    pub chosen: Vec<(usize, usize)>,
}

impl CvDraw {
    /// Set-bit position of every row.
    pub fn bits(&self) -> Vec<usize> {
        (0..self.cv_batch.rows())
            .map(|r| {
                self.cv_batch
                    .row(r)
                    .iter()
                    .position(|&v| v == 1.0)
                    .expect("one-hot cv row")
            })
            .collect()
    }
}

/// The contributor's half of a draw: per row a uniform categorical column,
/// a category by log-frequency, then a uniform row holding it.
pub fn draw_at_client<R: Rng + ?Sized>(
    index: &CategoryIndex,
    layout: &CvLayout,
    client: usize,
    batch: usize,
    rng: &mut R,
) -> Result<CvDraw, ConditioningError> {
    let spans = layout.client_spans(client);
    if spans.is_empty() || index.columns.is_empty() {
        return Err(ConditioningError::NotACandidate(client));
    }
    if spans.len() != index.columns.len() {
        return Err(ConditioningError::Layout("category index does not match layout".into()));
    }
    let dists: Vec<WeightedIndex<f64>> = index
        .columns
        .iter()
        .map(|(_, rows)| {
            WeightedIndex::new(CategoryIndex::category_probabilities(rows))
                .map_err(|_| ConditioningError::Layout("client table has no rows".into()))
        })
        .collect::<Result<_, _>>()?;
    let mut cv = Tensor2::zeros(batch, layout.width);
    let mut idx = Vec::with_capacity(batch);
    let mut chosen = Vec::with_capacity(batch);
    for r in 0..batch {
        let c = rng.random_range(0..spans.len());
        let cat = dists[c].sample(rng);
        let rows = &index.columns[c].1[cat];
        let pos = rows[rng.random_range(0..rows.len())];
        cv.set(r, spans[c].offset + cat, 1.0);
        idx.push(pos);
        chosen.push((index.columns[c].0, cat));
    }
    Ok(CvDraw {
        cv_batch: cv,
        contributor: client,
        idx_batch: idx,
        chosen,
    })
}

/// Contributor chosen by the renormalised ratio vector, then
/// [`draw_at_client`] on its table.
pub fn generate_cv<R: Rng + ?Sized>(
    tables: &[RawTable],
    layout: &CvLayout,
    ratio: &RatioVector,
    batch: usize,
    rng: &mut R,
) -> Result<CvDraw, ConditioningError> {
    if tables.len() != layout.n_clients {
        return Err(ConditioningError::Layout("table count differs from layout".into()));
    }
    let p = layout.sample_contributor(ratio, rng)?;
    draw_at_client(&CategoryIndex::new(&tables[p]), layout, p, batch, rng)
}

/// The cv filter: one dense layer and a leaky relu, width preserving.
pub fn cv_filter_spec(width: usize) -> NetSpec {
    NetSpec {
        input_dim: width,
        blocks: vec![BlockSpec {
            layers: vec![
                LayerSpec::Dense {
                    input: width,
                    output: width,
                },
                LayerSpec::LeakyRelu { slope: 0.2 },
            ],
            residual: Residual::None,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnSchema};
    use crate::nn::{Mode, Net};
    use crate::rng::stream;

    fn table(name: &str, cats: &[&str], values: Vec<u32>) -> RawTable {
        let n = values.len() as u64;
        RawTable::new(
            TableSchema::new(vec![ColumnSchema::categorical(name, cats)]).unwrap(),
            vec![Column::Categorical(values)],
            (0..n).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ratio_vectors() {
        let r = compute_ratio_vector(&ColumnAssignment::from_strs(&[&["a", "b"], &["c", "d"]])).unwrap();
        assert_eq!(r.0, vec![0.5, 0.5]);
        let r = compute_ratio_vector(&ColumnAssignment::from_strs(&[&["a"; 9], &["b"]])).unwrap();
        assert!((r.0[0] - 0.9).abs() < 1e-12 && (r.0[1] - 0.1).abs() < 1e-12);
        assert_eq!(compute_ratio_vector(&ColumnAssignment::from_strs(&[&["a"]])).unwrap().0, vec![1.0]);
        assert!(compute_ratio_vector(&ColumnAssignment::from_strs(&[&["a"], &[]])).is_err());
    }

    #[test]
    fn log_frequency_probabilities() {
        // counts chosen so that log(1 + count) is exactly 1 and 2
        let rows = vec![vec![0; 1], vec![0; 6]];
        let p = CategoryIndex::category_probabilities(&rows);
        assert!((p[0] - math::ln(2.0) / (math::ln(2.0) + math::ln(7.0))).abs() < 1e-12);
        let w = [math::ln(1.0 + (math::exp(1.0) - 1.0)), math::ln(1.0 + (math::exp(2.0) - 1.0))];
        assert!((w[0] / (w[0] + w[1]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn draws_match_their_rows() {
        let tables = vec![
            table("gender", &["M", "F"], vec![0, 0, 0, 1, 1, 1]),
            table("smoker", &["Y", "N"], vec![0, 0, 1, 1, 1, 1]),
        ];
        let layout = CvLayout::new(&[tables[0].schema.clone(), tables[1].schema.clone()]);
        assert_eq!(layout.width, 4);
        let mut rng = stream(1, "t", 0);
        for _ in 0..50 {
            let d = generate_cv(&tables, &layout, &RatioVector(vec![0.5, 0.5]), 3, &mut rng).unwrap();
            for (k, bit) in d.bits().into_iter().enumerate() {
                let span = layout.span_of_bit(bit).unwrap();
                assert_eq!(span.client, d.contributor);
                let cat = tables[d.contributor].columns[0].as_categorical().unwrap()[d.idx_batch[k]];
                assert_eq!(cat as usize, bit - span.offset);
                assert_eq!(d.chosen[k], (0, cat as usize));
            }
        }
    }

    #[test]
    fn clients_without_categoricals_are_skipped() {
        let cont = RawTable::new(
            TableSchema::new(vec![ColumnSchema::continuous("x")]).unwrap(),
            vec![Column::Numeric(vec![1.0, 2.0])],
            vec![0, 1],
        )
        .unwrap();
        let cat = table("c", &["A", "B"], vec![0, 1]);
        let layout = CvLayout::new(&[cont.schema.clone(), cat.schema.clone()]);
        let p = layout.contributor_probabilities(&RatioVector(vec![0.5, 0.5])).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        let only = CvLayout::new(&[cont.schema.clone()]);
        assert_eq!(
            only.contributor_probabilities(&RatioVector(vec![1.0])),
            Err(ConditioningError::Unavailable)
        );
    }

    #[test]
    fn cv_filter_is_row_wise() {
        let mut net = Net::new(cv_filter_spec(4), &mut stream(2, "t", 0)).unwrap();
        let cv = Tensor2::from_rows(&[vec![0., 1., 0., 0.], vec![0., 1., 0., 0.]]).unwrap();
        let (y, _) = net.forward(&cv, Mode::Train, &mut stream(2, "d", 0)).unwrap();
        assert_eq!(y.row(0), y.row(1));
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let (y, _) = net.forward(&cv, Mode::Train, &mut stream(2, "d", 0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
