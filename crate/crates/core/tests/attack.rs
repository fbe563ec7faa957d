use vtgan_core::attack::{reconstruct, score, ServerView};
use vtgan_core::fixtures;
use vtgan_core::protocol::{Federation, MessageLog, PartitionConfig, Seeds, TrainingConfig};

fn toy_run(shuffle: bool, seed: u64, rounds: u64) -> (ServerView, Federation) {
    let cfg = TrainingConfig {
        rounds,
        batch: 3,
        noise_dim: 4,
        shuffle,
        seeds: Seeds {
            server: seed,
            clients: seed + 1000,
            shuffle: seed + 2000,
            publication: seed + 3000,
        },
        ..TrainingConfig::default()
    };
    let partition = PartitionConfig {
        block_dim: 4,
        ..PartitionConfig::default()
    };
    let mut fed = Federation::new(fixtures::leak_toy().unwrap(), &partition, &cfg).unwrap();
    let mut log = MessageLog::new();
    fed.train(&mut log).unwrap();
    (ServerView::from_log(&log), fed)
}

#[test]
fn without_shuffling_the_server_recovers_the_toy() {
    let (view, fed) = toy_run(false, 1, 20);
    let report = reconstruct(&view, 6);
    assert_eq!(report.columns.len(), 2);
    assert_eq!(report.columns[0].ratios, vec![0.5, 0.5]);
    let truth: Vec<_> = fed.tables().into_iter().cloned().collect();
    let s = score(&report, &truth, fed.cv_layout()).unwrap();
    assert_eq!(s.accuracy, Some(1.0));
    assert_eq!(s.coverage, 1.0);
}

#[test]
fn with_shuffling_accuracy_matches_the_random_baseline() {
    let (mut acc, mut base, mut var, mut runs) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..100 {
        let (view, fed) = toy_run(true, seed, 2);
        let report = reconstruct(&view, 6);
        let truth: Vec<_> = fed.tables().into_iter().cloned().collect();
        let s = score(&report, &truth, fed.cv_layout()).unwrap();
        if let (Some(a), Some(b), Some(v)) = (s.accuracy, s.baseline, s.baseline_variance) {
            acc += a;
            base += b;
            var += v;
            runs += 1.0;
        }
    }
    let (acc, base, sigma) = (acc / runs, base / runs, var.sqrt() / runs);
    eprintln!("runs {runs} accuracy {acc} baseline {base} sigma {sigma}");
    assert!((acc - base).abs() <= 3.0 * sigma);
}
