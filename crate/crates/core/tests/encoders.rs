use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use vtgan_core::data::{Column, ColumnKind, ColumnSchema, RawTable, TableSchema};
use vtgan_core::encode::fit_gmm;
use vtgan_core::encode::{GmmConfig, TableEncoder};
use vtgan_core::rng::{stream, StreamRng};

fn random_column(rng: &mut StreamRng, i: usize, n: usize) -> (ColumnSchema, Column) {
    let name = format!("c{i}");
    match rng.random_range(0..3) {
        0 => {
            let k = rng.random_range(2..=5);
            let cats: Vec<String> = (0..k).map(|j| format!("v{j}")).collect();
            let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
            let values = (0..n).map(|_| rng.random_range(0..k as u32)).collect();
            (ColumnSchema::categorical(&name, &refs), Column::Categorical(values))
        }
        kind => {
            let modes: Vec<(f64, f64)> = (0..rng.random_range(1..=3))
                .map(|_| (rng.random_range(-100.0..100.0), rng.random_range(0.1..20.0)))
                .collect();
            let special = [-1.0, 0.0];
            let values = (0..n)
                .map(|_| {
                    if kind == 2 && rng.random::<f64>() < 0.3 {
                        special[rng.random_range(0..2)]
                    } else {
                        let (m, s) = modes[rng.random_range(0..modes.len())];
                        let z: f64 = rng.sample(StandardNormal);
                        m + s * z
                    }
                })
                .collect();
            let schema = if kind == 1 {
                ColumnSchema::continuous(&name)
            } else {
                ColumnSchema::mixed(&name, &special)
            };
            (schema, Column::Numeric(values))
        }
    }
}

fn random_table(seed: u64, n: usize) -> RawTable {
    let mut rng = stream(seed, "test:table", 0);
    let n_cols = rng.random_range(1..=5);
    let (schemas, columns): (Vec<_>, Vec<_>) = (0..n_cols).map(|i| random_column(&mut rng, i, n)).unzip();
    RawTable::new(TableSchema::new(schemas).unwrap(), columns, (0..n as u64).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decode_inverts_encode(seed in 0u64..1_000_000) {
        let table = random_table(seed, 1000);
        let enc = TableEncoder::fit(&table, &GmmConfig::default()).unwrap();
        let encoded = enc.encode(&table, &mut stream(seed, "test:encode", 0)).unwrap();
        let back = enc.decode(&encoded.matrix, table.row_ids.clone()).unwrap();
        for (c, (schema, l)) in table.schema.columns.iter().zip(&encoded.layout).enumerate() {
            match (&table.columns[c], &back.columns[c]) {
                (Column::Categorical(a), Column::Categorical(b)) => prop_assert_eq!(a, b),
                (Column::Numeric(a), Column::Numeric(b)) => {
                    for r in 0..a.len() {
                        let special = schema.mixed_categorical_values.contains(&a[r]);
                        let scalar = encoded.matrix.get(r, l.start);
                        if schema.kind == ColumnKind::Mixed && special {
                            prop_assert_eq!(a[r], b[r]);
                        } else if scalar.abs() < 1.0 {
                            let rel = (a[r] - b[r]).abs() / a[r].abs().max(1.0);
                            prop_assert!(rel <= 1e-9, "{}: {} -> {}", schema.name, a[r], b[r]);
                        }
                    }
                }
                _ => prop_assert!(false, "column storage changed"),
            }
        }
    }
}

#[test]
fn mixture_recovers_two_separated_modes() {
    let mut rng = stream(5, "test:gmm", 0);
    let mut left = Vec::new();
    let mut right = Vec::new();
    for _ in 0..2000 {
        let z: f64 = rng.sample(StandardNormal);
        if rng.random::<f64>() < 0.6 {
            left.push(-10.0 + z);
        } else {
            right.push(10.0 + 2.0 * z);
        }
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (m, s)
    };
    let values: Vec<f64> = left.iter().chain(&right).copied().collect();
    let gmm = fit_gmm(&values, &GmmConfig::default()).unwrap();
    assert_eq!(gmm.n_active(), 2, "{gmm:?}");
    let mut modes: Vec<(f64, f64, f64)> = gmm
        .active_modes()
        .into_iter()
        .map(|k| (gmm.means[k], gmm.stds[k], gmm.weights[k]))
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let active_weight: f64 = modes.iter().map(|m| m.2).sum();
    for ((mean, std, w), cluster) in modes.iter().zip([&left, &right]) {
        let (m, s) = stats(cluster);
        assert!((mean - m).abs() < 0.05, "mean {mean} vs {m}");
        assert!((std - s).abs() / s < 0.05, "std {std} vs {s}");
        let share = cluster.len() as f64 / values.len() as f64;
        assert!((w / active_weight - share).abs() < 0.01, "weight {w} vs {share}");
    }
}

#[test]
fn unimodal_data_keeps_one_mode() {
    let mut rng = stream(6, "test:gmm", 0);
    let values: Vec<f64> = (0..2000).map(|_| 3.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let gmm = fit_gmm(&values, &GmmConfig::default()).unwrap();
    assert_eq!(gmm.n_active(), 1, "{gmm:?}");
}
