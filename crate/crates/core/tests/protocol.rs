use vtgan_core::centralized::CentralizedGan;
use vtgan_core::data::split_columns;
use vtgan_core::fixtures;
use vtgan_core::nn::Residual;
use vtgan_core::protocol::{Federation, PartitionConfig, Phase, TrainingConfig};

fn small_config(rounds: u64) -> TrainingConfig {
    TrainingConfig {
        rounds,
        batch: 50,
        noise_dim: 16,
        ..TrainingConfig::default()
    }
}

fn small_partition(n1: usize, n2: usize, n3: usize, n4: usize) -> PartitionConfig {
    PartitionConfig {
        block_dim: 32,
        ..PartitionConfig::new(n1, n2, n3, n4)
    }
}

#[test]
fn one_client_matches_monolithic_reference() {
    let (table, _) = fixtures::correlated(300, 11).unwrap();
    let cfg = TrainingConfig {
        shuffle: false,
        ..small_config(10)
    };
    let mut fed = Federation::new(vec![table.clone()], &small_partition(2, 0, 2, 0), &cfg).unwrap();
    fed.train(&mut ()).unwrap();
    let mut reference = CentralizedGan::new(table, 32, Residual::Concat, &cfg).unwrap();
    reference.train().unwrap();
    let a = fed.records();
    let b = reference.records();
    assert_eq!(a.len(), 60);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.phase, y.phase);
        let rel = (x.loss - y.loss).abs() / x.loss.abs().max(y.loss.abs()).max(1e-300);
        assert!(rel <= 1e-9, "{x:?} vs {y:?}");
    }
}

#[test]
fn two_clients_train_and_publish() {
    let (table, assignment) = fixtures::correlated(200, 3).unwrap();
    let tables = split_columns(&table, &assignment).unwrap();
    let mut fed = Federation::new(tables, &small_partition(0, 2, 2, 0), &small_config(3)).unwrap();
    fed.train(&mut ()).unwrap();
    assert_eq!(fed.records().iter().filter(|r| r.phase == Phase::Gen).count(), 3);
    let synth = fed.synthesize(120, &mut ()).unwrap();
    assert_eq!(synth.n_rows(), 120);
    assert_eq!(synth.schema.names(), table.schema.names());
}

fn tiny(rounds: u64) -> TrainingConfig {
    TrainingConfig {
        rounds,
        disc_epochs: 1,
        batch: 10,
        noise_dim: 4,
        ..TrainingConfig::default()
    }
}

#[test]
fn shuffles_keep_clients_aligned() {
    let n = 60;
    let (table, _) = fixtures::correlated(n, 21).unwrap();
    for k in 2..=5 {
        let tables = split_columns(&table, &fixtures::correlated_assignment(k)).unwrap();
        let partition = PartitionConfig {
            block_dim: 8,
            ..PartitionConfig::new(1, 1, 1, 1)
        };
        let mut fed = Federation::new(tables, &partition, &tiny(100)).unwrap();
        let mut previous: Vec<u64> = (0..n as u64).collect();
        let mut fixed_points = 0;
        let mut orders = std::collections::BTreeSet::new();
        for _ in 0..100 {
            fed.train_round(&mut ()).unwrap();
            let ids = fed.tables()[0].row_ids.clone();
            for t in fed.tables() {
                assert_eq!(t.row_ids, ids, "{k} clients disagree on row order");
            }
            fixed_points += ids.iter().zip(&previous).filter(|(a, b)| a == b).count();
            orders.insert(ids.clone());
            previous = ids;
        }
        assert_eq!(orders.len(), 100, "a permutation repeated");
        // Fixed points of a uniform permutation have mean 1 and variance 1.
        let mean = fixed_points as f64 / 100.0;
        assert!((mean - 1.0).abs() < 0.4, "{k} clients: mean fixed points {mean}");
    }
}

fn params(fed: &Federation) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut gen = vec![fed.server.gen_top.net.params().data.clone()];
    let mut disc = vec![
        fed.server.disc_top.net.params().data.clone(),
        fed.server.cv_filter.net.params().data.clone(),
    ];
    for c in &fed.clients {
        gen.push(c.gen.net.params().data.clone());
        disc.push(c.disc.net.params().data.clone());
    }
    (gen, disc)
}

#[test]
fn each_step_updates_only_its_own_networks() {
    let (table, assignment) = fixtures::correlated(80, 5).unwrap();
    let tables = split_columns(&table, &assignment).unwrap();
    let partition = PartitionConfig {
        block_dim: 8,
        ..PartitionConfig::new(1, 1, 1, 1)
    };
    let mut fed = Federation::new(tables, &partition, &tiny(1)).unwrap();
    let (g0, d0) = params(&fed);
    fed.step(Phase::Disc(0), &mut ()).unwrap();
    let (g1, d1) = params(&fed);
    assert_eq!(g0, g1, "a discriminator step moved generator weights");
    for (a, b) in d0.iter().zip(&d1) {
        assert_ne!(a, b, "every discriminator shard receives its gradient");
    }
    fed.step(Phase::Gen, &mut ()).unwrap();
    let (g2, d2) = params(&fed);
    assert_eq!(d1, d2, "a generator step moved discriminator weights");
    for (a, b) in g1.iter().zip(&g2) {
        assert_ne!(a, b, "every generator shard receives its gradient");
    }
    assert!(fed.step(Phase::Shuffle, &mut ()).is_err());
}

fn restored_copy(trained: &Federation, tables: Vec<vtgan_core::data::RawTable>, partition: &PartitionConfig, cfg: &TrainingConfig) -> Federation {
    let mut restored = Federation::new(tables, partition, cfg).unwrap();
    restored.server.gen_top = trained.server.gen_top.clone();
    restored.server.cv_filter = trained.server.cv_filter.clone();
    restored.server.disc_top = trained.server.disc_top.clone();
    for (r, t) in restored.clients.iter_mut().zip(&trained.clients) {
        r.gen = t.gen.clone();
        r.disc = t.disc.clone();
    }
    restored
}

#[test]
fn synthesis_after_training_matches_a_restored_copy() {
    let (table, assignment) = fixtures::correlated(100, 9).unwrap();
    let tables = split_columns(&table, &assignment).unwrap();
    let partition = small_partition(1, 1, 1, 1);
    let cfg = small_config(4);
    let mut trained = Federation::new(tables.clone(), &partition, &cfg).unwrap();
    trained.train(&mut ()).unwrap();
    let mut restored = restored_copy(&trained, tables.clone(), &partition, &cfg);
    let mut reseeded = restored_copy(&trained, tables, &partition, &cfg);
    let a = trained.synthesize(70, &mut ()).unwrap();
    let b = restored.synthesize(70, &mut ()).unwrap();
    assert_eq!(a, b);

    reseeded.set_publication_seed(99);
    let c = reseeded.synthesize(70, &mut ()).unwrap();
    assert_ne!(c.records(), a.records());
    let mut x = a.records();
    let mut y = c.records();
    x.sort();
    y.sort();
    assert_eq!(x, y, "a new publication seed only reorders the rows");
}
