use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vtgan::config::{ExperimentConfig, TransportKind};
use vtgan::error::{Error, Result};
use vtgan::run::{self, Experiment};
use vtgan::io;
use vtgan_core::data::{ColumnAssignment, TableSchema};
use vtgan_core::eval::UtilityConfig;
use vtgan_core::fixtures;
use vtgan_core::nn::gradcheck;

/// Vertically federated conditional tabular GAN.
///
/// Log verbosity follows VTGAN_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "vtgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config; writes a snapshot, checkpoints and logs.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Publish synthetic rows from a checkpoint.
    Synthesize {
        /// The run's config (or the snapshot it wrote).
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        publication_seed: Option<u64>,
    },
    /// Metric report of a synthetic CSV against the real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Client columns, e.g. `a,b;c,d`. Without it only the overall
        /// association difference is reported.
        #[arg(long)]
        assignment: Option<String>,
        /// Held-out real rows; enables ML utility.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Defaults to the schema's target.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = UtilityConfig::default().epochs)]
        utility_epochs: usize,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the server's reconstruction attack over a message log.
    AttackDemo {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/messages.json`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Report every this many rounds.
        #[arg(long, default_value_t = 1)]
        every: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient checks and the centralized-equivalence oracle.
    Selftest {
        /// Random composed nets on top of one per layer type.
        #[arg(long, default_value_t = 24)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a built-in dataset with its schema and a starter config.
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FixtureKind {
    /// Six columns over two clients with a planted cross-client correlation.
    Correlated,
    /// Two binary columns over two clients, six rows.
    LeakToy,
}

/// Command-line overrides of config fields.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, conflicts_with = "rounds")]
    epochs: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    disc_epochs: Option<u32>,
    #[arg(long)]
    noise_dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    shuffle: Option<bool>,
    #[arg(long)]
    conditional_loss: Option<bool>,
    /// `n1,n2,n3,n4`.
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    block_dim: Option<usize>,
    #[arg(long)]
    strict: Option<bool>,
    #[arg(long)]
    seed_server: Option<u64>,
    #[arg(long)]
    seed_clients: Option<u64>,
    #[arg(long)]
    seed_shuffle: Option<u64>,
    #[arg(long)]
    seed_publication: Option<u64>,
    #[arg(long, value_enum)]
    transport: Option<TransportKind>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) -> Result<()> {
        let t = &mut cfg.training;
        if let Some(r) = self.rounds {
            t.base.rounds = r;
            t.epochs = None;
        }
        if self.epochs.is_some() {
            t.epochs = self.epochs;
        }
        let b = &mut t.base;
        set(&mut b.batch, self.batch);
        set(&mut b.disc_epochs, self.disc_epochs);
        set(&mut b.noise_dim, self.noise_dim);
        set(&mut b.adam.lr, self.lr);
        set(&mut b.lambda, self.lambda);
        set(&mut b.temperature, self.temperature);
        set(&mut b.shuffle, self.shuffle);
        set(&mut b.conditional_loss, self.conditional_loss);
        set(&mut b.seeds.server, self.seed_server);
        set(&mut b.seeds.clients, self.seed_clients);
        set(&mut b.seeds.shuffle, self.seed_shuffle);
        set(&mut b.seeds.publication, self.seed_publication);
        let p = &mut cfg.partition;
        if let Some(s) = self.partition {
            let n: Vec<usize> = s
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::Config(format!("--partition: {s:?} is not n1,n2,n3,n4")))?;
            let [n1, n2, n3, n4] = n[..] else {
                return Err(Error::Config(format!("--partition: {s:?} is not n1,n2,n3,n4")));
            };
            (p.n1, p.n2, p.n3, p.n4) = (n1, n2, n3, n4);
        }
        set(&mut p.block_dim, self.block_dim);
        set(&mut p.strict, self.strict);
        set(&mut cfg.transport, self.transport);
        set(&mut cfg.output_dir, self.output_dir);
        set(&mut cfg.checkpoint_every, self.checkpoint_every);
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_assignment(s: &str) -> ColumnAssignment {
    ColumnAssignment::new(
        s.split(';')
            .map(|c| c.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect())
            .collect(),
    )
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?);
            Ok(())
        }
    }
}

fn cmd_train(config: &Path, overrides: Overrides) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    overrides.apply(&mut cfg)?;
    let exp = Experiment::load(cfg)?;
    let trained = run::train(&exp, &mut ())?;
    let fed = &trained.fed;
    let last = fed.records().last();
    println!(
        "trained {} rounds ({} steps, {} messages); final loss {}",
        fed.round(),
        fed.records().len(),
        trained.log.len(),
        last.map_or("n/a".into(), |r| format!("{:.6}", r.loss))
    );
    println!("outputs in {}", exp.config.output_dir.display());
    Ok(())
}

fn cmd_synthesize(config: &Path, checkpoint: Option<PathBuf>, rows: usize, out: &Path, seed: Option<u64>) -> Result<()> {
    let exp = Experiment::from_path(config)?;
    let dir = checkpoint.unwrap_or_else(|| exp.output(run::CHECKPOINT_DIR));
    let mut fed = exp.restore(&dir)?;
    let table = run::synthesize(&mut fed, rows, seed)?;
    io::write_csv(out, &table)?;
    println!("wrote {} rows to {}", table.n_rows(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    real: &Path,
    synth: &Path,
    schema: &Path,
    assignment: Option<String>,
    test: Option<PathBuf>,
    target: Option<String>,
    utility_epochs: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let schema: TableSchema = io::read_schema(schema)?;
    let real_t = io::read_csv(real, &schema)?;
    let synth_t = io::read_csv(synth, &schema)?;
    let assignment = assignment.as_deref().map(parse_assignment);
    if let Some(a) = &assignment {
        a.validate(&schema).map_err(|e| Error::Config(format!("--assignment: {e}")))?;
    }
    let test_t = test.as_deref().map(|p| io::read_csv(p, &schema)).transpose()?;
    let target = target.or_else(|| schema.target.clone());
    let utility = UtilityConfig {
        epochs: utility_epochs,
        ..UtilityConfig::default()
    };
    let report = run::evaluate_tables(&real_t, &synth_t, assignment.as_ref(), test_t.as_ref(), target.as_deref(), utility)?;
    print_json(&report, out.as_deref())
}

fn cmd_attack_demo(config: &Path, log: Option<PathBuf>, every: u64, out: Option<PathBuf>) -> Result<()> {
    let exp = Experiment::from_path(config)?;
    let path = log.unwrap_or_else(|| exp.output(run::MESSAGES));
    let file = run::read_log(&path)?;
    let demo = run::attack_demo(&exp, &file, every)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "rounds", "cells", "coverage", "accuracy", "baseline");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &demo.per_round {
        println!(
            "{:>8} {:>10} {:>10.4} {:>10} {:>10}",
            r.rounds,
            r.confident_cells,
            r.coverage,
            fmt(r.accuracy),
            fmt(r.baseline)
        );
    }
    if let Some(last) = demo.per_round.last() {
        if last.coverage < 1.0 {
            println!("notice: coverage {:.4} < 1, the reconstruction is partial", last.coverage);
        }
    }
    for (i, c) in demo.report.columns.iter().enumerate() {
        let ratios: Vec<String> = c.ratios.iter().map(|r| format!("{r:.3}")).collect();
        println!("inferred column {i}: bits {:?}, ratios {}", c.bits, ratios.join(":"));
    }
    if let Some(p) = out {
        io::write_json(&p, &demo)?;
    }
    Ok(())
}

fn cmd_selftest(cases: usize, seed: u64) -> Result<bool> {
    let suite = gradcheck::suite(seed, cases).map_err(|e| Error::Config(format!("gradient suite: {e}")))?;
    let max = |f: fn(&gradcheck::SuiteCase) -> f64| suite.iter().map(f).fold(0.0, f64::max);
    let (gi, gp, pen) = (max(|c| c.input_error), max(|c| c.param_error), max(|c| c.penalty_error));
    let grads_ok = gi <= run::GRADIENT_TOLERANCE && gp <= run::GRADIENT_TOLERANCE && pen <= run::PENALTY_TOLERANCE;
    for c in &suite {
        log::debug!("{}: input {:.2e} param {:.2e} penalty {:.2e}", c.name, c.input_error, c.param_error, c.penalty_error);
    }
    println!(
        "{} gradients: {} nets, input {gi:.2e}, params {gp:.2e} (tol {:.0e}), penalty {pen:.2e} (tol {:.0e})",
        if grads_ok { "PASS" } else { "FAIL" },
        suite.len(),
        run::GRADIENT_TOLERANCE,
        run::PENALTY_TOLERANCE
    );
    let eq = run::centralized_equivalence(10)?;
    let eq_ok = eq.max_relative_error <= run::EQUIVALENCE_TOLERANCE;
    println!(
        "{} centralized equivalence: {} steps, max relative error {:.2e} (tol {:.0e})",
        if eq_ok { "PASS" } else { "FAIL" },
        eq.steps,
        eq.max_relative_error,
        run::EQUIVALENCE_TOLERANCE
    );
    Ok(grads_ok && eq_ok)
}

const STARTER: &str = r#"output_dir = "run"
checkpoint_every = 100

[data]
csv = "data.csv"
schema = "schema.json"
"#;

fn cmd_fixture(kind: FixtureKind, dir: &Path, rows: usize, seed: u64) -> Result<()> {
    let (table, assignment, extra) = match kind {
        FixtureKind::Correlated => {
            let (t, a) = fixtures::correlated(rows, seed)?;
            let (test, _) = fixtures::correlated(rows.div_ceil(2), seed + 1)?;
            io::write_csv(&dir.join("test.csv"), &test)?;
            (t, a, "test_csv = \"test.csv\"\n\n[training]\nepochs = 100\n")
        }
        FixtureKind::LeakToy => {
            let parts = fixtures::leak_toy()?;
            let t = vtgan_core::data::hconcat(&parts)?;
            let a = ColumnAssignment::from_strs(&[&["c1"], &["c2"]]);
            (t, a, "\n[partition]\nblock_dim = 4\n\n[training]\nrounds = 20\nbatch = 3\nnoise_dim = 4\n")
        }
    };
    io::write_csv(&dir.join("data.csv"), &table)?;
    io::write_json(&dir.join("schema.json"), &table.schema)?;
    let assignment = toml::to_string(&toml::toml! { assignment = (assignment.clients.clone()) })
        .map_err(|e| Error::Config(e.to_string()))?;
    io::write_string(&dir.join("experiment.toml"), &format!("{STARTER}{assignment}{extra}"))?;
    println!("wrote data.csv, schema.json and experiment.toml to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VTGAN_LOG", "info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Train { config, overrides } => cmd_train(&config, overrides),
        Command::Synthesize {
            config,
            checkpoint,
            rows,
            out,
            publication_seed,
        } => cmd_synthesize(&config, checkpoint, rows, &out, publication_seed),
        Command::Evaluate {
            real,
            synth,
            schema,
            assignment,
            test,
            target,
            utility_epochs,
            out,
        } => cmd_evaluate(&real, &synth, &schema, assignment, test, target, utility_epochs, out),
        Command::AttackDemo { config, log, every, out } => cmd_attack_demo(&config, log, every, out),
        Command::Selftest { cases, seed } => match cmd_selftest(cases, seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Command::Fixture { kind, dir, rows, seed } => cmd_fixture(kind, &dir, rows, seed),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
