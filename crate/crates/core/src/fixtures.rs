//! Seeded synthetic tables used by the tests, the CLI and the demos.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{split_columns, Column, ColumnAssignment, ColumnSchema, DataError, RawTable, TableSchema};
use crate::rng::stream;

/// Pearson correlation planted between `x_a` (client A) and `x_b` (client B).
pub const PLANTED_CORRELATION: f64 = 0.8;

/// Six columns over two clients:
///
/// * A: `x_a` ~ N(0,1), `cat_a` (three bins of `x_a` plus noise), `imb` (9:1)
/// * B: `x_b` = 10 (0.8 x_a + 0.6 e) + 50, `cat_b` (sign of `e` plus noise),
///   `mix_b` (0 with probability 0.3, else log-normal)
///
/// `cat_b` is the target column.
pub fn correlated(n: usize, seed: u64) -> Result<(RawTable, ColumnAssignment), DataError> {
    let schema = TableSchema {
        columns: vec![
            ColumnSchema::continuous("x_a"),
            ColumnSchema::categorical("cat_a", &["lo", "mid", "hi"]),
            ColumnSchema::categorical("imb", &["common", "rare"]),
            ColumnSchema::continuous("x_b"),
            ColumnSchema::categorical("cat_b", &["neg", "pos"]),
            ColumnSchema::mixed("mix_b", &[0.0]),
        ],
        target: Some("cat_b".into()),
    };
    let mut rng = stream(seed, "fixture:correlated", 0);
    let mut cols: [Vec<f64>; 6] = Default::default();
    let r = PLANTED_CORRELATION;
    let s = crate::math::sqrt(1.0 - r * r);
    for _ in 0..n {
        let u: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let noise_a: f64 = rng.sample(StandardNormal);
        let noise_b: f64 = rng.sample(StandardNormal);
        let cat_a = u + 0.5 * noise_a;
        cols[0].push(u);
        cols[1].push(if cat_a < -0.5 {
            0.0
        } else if cat_a < 0.5 {
            1.0
        } else {
            2.0
        });
        cols[2].push(if rng.random::<f64>() < 0.1 { 1.0 } else { 0.0 });
        cols[3].push(10.0 * (r * u + s * e) + 50.0);
        cols[4].push(if e + 0.5 * noise_b > 0.0 { 1.0 } else { 0.0 });
        let mix = if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            let w: f64 = rng.sample(StandardNormal);
            crate::math::exp(0.5 * w + 0.3 * u)
        };
        cols[5].push(mix);
    }
    let columns = cols
        .into_iter()
        .zip(&schema.columns)
        .map(|(v, c)| match c.kind {
            crate::data::ColumnKind::Categorical => Column::Categorical(v.into_iter().map(|x| x as u32).collect()),
            _ => Column::Numeric(v),
        })
        .collect();
    let table = RawTable::new(schema, columns, (0..n as u64).collect())?;
    let assignment = ColumnAssignment::from_strs(&[&["x_a", "cat_a", "imb"], &["x_b", "cat_b", "mix_b"]]);
    Ok((table, assignment))
}

/// Splits the six-column fixture over `n_clients` (1 to 6) in column order,
/// as evenly as possible.
pub fn correlated_assignment(n_clients: usize) -> ColumnAssignment {
    let names = ["x_a", "cat_a", "imb", "x_b", "cat_b", "mix_b"];
    let k = n_clients.clamp(1, names.len());
    let mut out = vec![Vec::new(); k];
    let base = names.len() / k;
    let extra = names.len() % k;
    let mut it = names.iter();
    for (i, c) in out.iter_mut().enumerate() {
        for _ in 0..base + usize::from(i < extra) {
            c.push((*it.next().expect("six names")).into());
        }
    }
    ColumnAssignment::new(out)
}

/// The six-row, two-column toy: `c1` splits rows 1:1 and `c2` splits them
/// 1:2, one column per client.
pub fn leak_toy() -> Result<Vec<RawTable>, DataError> {
    let schema = TableSchema::new(vec![
        ColumnSchema::categorical("c1", &["a", "b"]),
        ColumnSchema::categorical("c2", &["x", "y"]),
    ])?;
    let table = RawTable::new(
        schema,
        vec![
            Column::Categorical(vec![0, 0, 0, 1, 1, 1]),
            Column::Categorical(vec![0, 0, 1, 1, 1, 1]),
        ],
        (0..6).collect(),
    )?;
    split_columns(&table, &ColumnAssignment::from_strs(&[&["c1"], &["c2"]]))
}
