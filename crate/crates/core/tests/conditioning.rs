use statrs::distribution::{ChiSquared, ContinuousCDF};
use vtgan_core::cond::{compute_ratio_vector, draw_at_client, generate_cv, CategoryIndex, CvLayout};
use vtgan_core::data::{split_columns, Column, ColumnAssignment, ColumnSchema, RawTable, TableSchema};
use vtgan_core::rng::stream;

const DRAWS: usize = 10_000;

fn repeated(counts: &[usize]) -> Vec<u32> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k as u32, c))
        .collect()
}

/// Three clients over 100 rows: A holds `a` (5/20/75) and a number, B holds
/// `b1` (50/50) and `b2` (1/9/90), C holds a single number.
fn fixture() -> (Vec<RawTable>, ColumnAssignment) {
    let n = 100;
    let schema = TableSchema::new(vec![
        ColumnSchema::categorical("a", &["x", "y", "z"]),
        ColumnSchema::continuous("num_a"),
        ColumnSchema::categorical("b1", &["p", "q"]),
        ColumnSchema::categorical("b2", &["r", "s", "t"]),
        ColumnSchema::continuous("num_c"),
    ])
    .unwrap();
    let numbers: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
    let table = RawTable::new(
        schema,
        vec![
            Column::Categorical(repeated(&[5, 20, 75])),
            Column::Numeric(numbers.clone()),
            Column::Categorical(repeated(&[50, 50])),
            Column::Categorical(repeated(&[1, 9, 90])),
            Column::Numeric(numbers),
        ],
        (0..n as u64).collect(),
    )
    .unwrap();
    let assignment = ColumnAssignment::from_strs(&[&["a", "num_a"], &["b1", "b2"], &["num_c"]]);
    (split_columns(&table, &assignment).unwrap(), assignment)
}

fn log_weights(counts: &[usize]) -> Vec<f64> {
    let w: Vec<f64> = counts.iter().map(|&c| (c as f64).ln_1p()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

/// Upper-tail p-value of Pearson's statistic.
fn chi_square_p(observed: &[usize], expected: &[f64]) -> f64 {
    let n: usize = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = expected.iter().filter(|&&p| p > 0.0).count() - 1;
    1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat)
}

#[test]
fn categories_follow_log_frequency() {
    let (tables, _) = fixture();
    let schemas: Vec<TableSchema> = tables.iter().map(|t| t.schema.clone()).collect();
    let layout = CvLayout::new(&schemas);
    assert_eq!(layout.width, 8);

    let index = CategoryIndex::new(&tables[0]);
    let draw = draw_at_client(&index, &layout, 0, DRAWS, &mut stream(1, "test:cv", 0)).unwrap();
    let mut counts = vec![0; 3];
    for bit in draw.bits() {
        counts[bit] += 1;
    }
    let p = chi_square_p(&counts, &log_weights(&[5, 20, 75]));
    assert!(p > 0.01, "client A: counts {counts:?}, p = {p}");

    // Two columns at B: a uniform column, then log-frequency within it.
    let index = CategoryIndex::new(&tables[1]);
    let draw = draw_at_client(&index, &layout, 1, DRAWS, &mut stream(2, "test:cv", 0)).unwrap();
    let mut counts = vec![0; 5];
    for bit in draw.bits() {
        counts[bit - 3] += 1;
    }
    let expected: Vec<f64> = log_weights(&[50, 50])
        .into_iter()
        .chain(log_weights(&[1, 9, 90]))
        .map(|p| p / 2.0)
        .collect();
    let p = chi_square_p(&counts, &expected);
    assert!(p > 0.01, "client B: counts {counts:?}, p = {p}");
}

#[test]
fn contributors_follow_renormalised_ratios() {
    let (tables, assignment) = fixture();
    let ratio = compute_ratio_vector(&assignment).unwrap();
    assert_eq!(ratio.0, vec![0.4, 0.4, 0.2]);
    let schemas: Vec<TableSchema> = tables.iter().map(|t| t.schema.clone()).collect();
    let layout = CvLayout::new(&schemas);
    let mut rng = stream(3, "test:contributor", 0);
    let mut counts = vec![0; 3];
    for _ in 0..DRAWS {
        counts[layout.sample_contributor(&ratio, &mut rng).unwrap()] += 1;
    }
    assert_eq!(counts[2], 0, "client C holds no categorical column");
    let p = chi_square_p(&counts, &[0.5, 0.5, 0.0]);
    assert!(p > 0.01, "contributors {counts:?}, p = {p}");

    // The composed draw picks the same contributor distribution.
    let mut rng = stream(4, "test:contributor", 0);
    let mut counts = vec![0; 3];
    for _ in 0..2000 {
        counts[generate_cv(&tables, &layout, &ratio, 1, &mut rng).unwrap().contributor] += 1;
    }
    let p = chi_square_p(&counts, &[0.5, 0.5, 0.0]);
    assert!(p > 0.01, "generate_cv contributors {counts:?}, p = {p}");
}
