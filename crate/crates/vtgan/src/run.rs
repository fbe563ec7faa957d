//! The operations behind each subcommand, shared with the acceptance
//! harness.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vtgan_core::attack::{reconstruct, score, ReconstructionReport, ServerView};
use vtgan_core::cond::CvLayout;
use vtgan_core::data::{split_columns, RawTable, ShuffleState, TableSchema};
use vtgan_core::eval::{evaluate, MetricReport, UtilityConfig, UtilityInput};
use vtgan_core::protocol::{
    ClientData, Federation, MessageLog, Observer, Party, Phase, StepRecord, Transport,
};
use vtgan_core::rng::stream;

use crate::checkpoint::{self, Checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::tcp::AnyTransport;

pub const LOG_VERSION: u32 = 1;

/// Output file names inside `output_dir`.
pub const SNAPSHOT: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOSSES: &str = "losses.json";
pub const MESSAGES: &str = "messages.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFile {
    pub version: u32,
    pub n_rows: usize,
    pub n_clients: usize,
    pub log: MessageLog,
}

/// A validated config with its data loaded and split.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub schema: TableSchema,
    pub table: RawTable,
    pub tables: Vec<RawTable>,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let mut schema = config.validate()?;
        if let Some(t) = &config.data.target {
            schema.target = Some(t.clone());
        }
        let table = io::read_csv(&config.data.csv, &schema)?;
        let tables = split_columns(&table, &config.assignment())?;
        config.training_config(table.n_rows())?;
        Ok(Self {
            config,
            schema,
            table,
            tables,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::load(ExperimentConfig::load(path)?)
    }

    pub fn n_rows(&self) -> usize {
        self.table.n_rows()
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn federation(&self, data: Vec<ClientData>) -> Result<Federation<AnyTransport>> {
        let training = self.config.training_config(self.n_rows())?;
        let transport = AnyTransport::new(self.config.transport)?;
        Ok(Federation::from_data(data, &self.config.partition, &training, transport)?)
    }

    /// Fits encoders and initialises every shard.
    pub fn build(&self) -> Result<Federation<AnyTransport>> {
        let training = self.config.training_config(self.n_rows())?;
        self.federation(vtgan_core::protocol::prepare_clients(self.tables.clone(), &training)?)
    }

    /// Rebuilds the federation around a saved checkpoint, reusing its
    /// encoders.
    pub fn restore(&self, dir: &Path) -> Result<Federation<AnyTransport>> {
        let ckpt = Checkpoint::read(dir)?;
        if ckpt.manifest.encoders.len() != self.tables.len() {
            return Err(Error::Checkpoint(format!(
                "{} clients in the checkpoint, {} in the config",
                ckpt.manifest.encoders.len(),
                self.tables.len()
            )));
        }
        let seed = self.config.training.base.seeds.clients;
        let data = self
            .tables
            .iter()
            .zip(&ckpt.manifest.encoders)
            .enumerate()
            .map(|(i, (t, enc))| {
                if t.schema != ckpt.manifest.schemas[i] {
                    return Err(Error::Checkpoint(format!("client{i}: schema differs from the checkpoint")));
                }
                Ok(ClientData::with_encoder(t.clone(), enc.clone(), &mut stream(seed, "encode", i as u64))?)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut fed = self.federation(data)?;
        ckpt.apply(&mut fed)?;
        Ok(fed)
    }
}

pub struct Trained {
    pub fed: Federation<AnyTransport>,
    pub log: MessageLog,
}

/// Trains for the configured rounds, checkpointing every
/// `checkpoint_every` rounds and after the last. Writes the config
/// snapshot, the loss records and the message log to `output_dir`.
pub fn train(exp: &Experiment, extra: &mut dyn Observer) -> Result<Trained> {
    let snapshot = exp.config.snapshot(exp.n_rows())?;
    io::write_string(&exp.output(SNAPSHOT), &snapshot.to_toml()?)?;
    let mut fed = exp.build()?;
    let mut log = MessageLog::new();
    let rounds = fed.config().rounds;
    let ckpt_dir = exp.output(CHECKPOINT_DIR);
    let mut last_good = None;
    for r in 0..rounds {
        if let Err(e) = fed.train_round(&mut (&mut log, &mut *extra)) {
            write_logs(exp, fed.records(), &log)?;
            match last_good {
                Some(k) => log::error!("round {r} failed; last good checkpoint {} is from round {k}", ckpt_dir.display()),
                None => log::error!("round {r} failed before any checkpoint was written"),
            }
            return Err(e.into());
        }
        let done = r + 1;
        if done % exp.config.checkpoint_every == 0 || done == rounds {
            checkpoint::save(&ckpt_dir, &fed)?;
            last_good = Some(done);
        }
        if done % 50 == 0 || done == rounds {
            if let Some(rec) = fed.records().iter().rev().find(|s| matches!(s.phase, Phase::Disc(_))) {
                log::info!("round {done}/{rounds}: critic loss {:.4}, wasserstein {:.4}", rec.loss, rec.wasserstein);
            }
        }
    }
    write_logs(exp, fed.records(), &log)?;
    Ok(Trained { fed, log })
}

fn write_logs(exp: &Experiment, records: &[StepRecord], log: &MessageLog) -> Result<()> {
    io::write_json(&exp.output(LOSSES), &records)?;
    let file = LogFile {
        version: LOG_VERSION,
        n_rows: exp.n_rows(),
        n_clients: exp.tables.len(),
        log: log.clone(),
    };
    let path = exp.output(MESSAGES);
    let text = serde_json::to_string(&file).map_err(|e| Error::parse(&path, e))?;
    io::write_string(&path, &text)
}

pub fn read_log(path: &Path) -> Result<LogFile> {
    #[derive(Deserialize)]
    struct Header {
        version: u32,
    }
    let text = io::read_to_string(path)?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    if header.version != LOG_VERSION {
        return Err(Error::Log(format!(
            "{}: version {} (this build reads {LOG_VERSION})",
            path.display(),
            header.version
        )));
    }
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// `n` published rows from `fed`, optionally under another publication
/// seed.
pub fn synthesize<T: Transport>(fed: &mut Federation<T>, n: usize, publication_seed: Option<u64>) -> Result<RawTable> {
    if let Some(s) = publication_seed {
        fed.set_publication_seed(s);
    }
    Ok(fed.synthesize(n, &mut ())?)
}

/// Metric report of `synth` against `real`; ML utility when both a test
/// table and a target are given.
pub fn evaluate_tables(
    real: &RawTable,
    synth: &RawTable,
    assignment: Option<&vtgan_core::data::ColumnAssignment>,
    test: Option<&RawTable>,
    target: Option<&str>,
    utility: UtilityConfig,
) -> Result<MetricReport> {
    let input = match (test, target) {
        (Some(test), Some(target)) => Some(UtilityInput {
            test,
            target,
            config: utility,
        }),
        _ => None,
    };
    Ok(evaluate(real, synth, assignment, input)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRound {
    /// Observations from rounds before this one.
    pub rounds: u64,
    pub confident_cells: usize,
    pub coverage: f64,
    pub accuracy: Option<f64>,
    pub baseline: Option<f64>,
    pub baseline_sd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDemo {
    pub per_round: Vec<AttackRound>,
    pub report: ReconstructionReport,
}

/// The clients' tables as they stood after the shuffles of the first
/// `rounds` rounds, replayed from the shared seed and the log's flags.
pub fn replay_truth(tables: &[RawTable], log: &MessageLog, shuffle_seed: u64, rounds: u64) -> Vec<RawTable> {
    let mut shuffled: Vec<u64> = log
        .records
        .iter()
        .filter(|r| r.receiver == Party::Server && r.phase == Phase::Shuffle && r.shuffle == Some(true) && r.round < rounds)
        .map(|r| r.round)
        .collect();
    shuffled.dedup();
    let mut state = ShuffleState::new(shuffle_seed);
    let mut out = tables.to_vec();
    for _ in shuffled {
        let perm = state.permutation(out[0].n_rows());
        out = out.iter().map(|t| t.permute(&perm)).collect();
        state = state.advance();
    }
    out
}

/// Runs the server's reconstruction on prefixes of the log, `every`
/// rounds apart, scoring each against the replayed truth.
pub fn attack_demo(exp: &Experiment, file: &LogFile, every: u64) -> Result<AttackDemo> {
    if file.n_rows != exp.n_rows() || file.n_clients != exp.tables.len() {
        return Err(Error::Log(format!(
            "log covers {} rows over {} clients, config has {} over {}",
            file.n_rows,
            file.n_clients,
            exp.n_rows(),
            exp.tables.len()
        )));
    }
    let schemas: Vec<TableSchema> = exp.tables.iter().map(|t| t.schema.clone()).collect();
    let layout = CvLayout::new(&schemas);
    let view = ServerView::from_log(&file.log);
    let total = file.log.records.iter().map(|r| r.round + 1).max().unwrap_or(0);
    let seed = exp.config.training.base.seeds.shuffle;
    let mut checkpoints: Vec<u64> = (1..=total).filter(|r| r % every.max(1) == 0).collect();
    if checkpoints.last() != Some(&total) {
        checkpoints.push(total);
    }
    let mut per_round = Vec::new();
    let mut report = ReconstructionReport::default();
    for r in checkpoints {
        report = reconstruct(&view.truncated(r), file.n_rows);
        let truth = replay_truth(&exp.tables, &file.log, seed, r);
        let s = score(&report, &truth, &layout)?;
        per_round.push(AttackRound {
            rounds: r,
            confident_cells: s.confident_cells,
            coverage: s.coverage,
            accuracy: s.accuracy,
            baseline: s.baseline,
            baseline_sd: s.baseline_variance.map(f64::sqrt),
        });
    }
    Ok(AttackDemo { per_round, report })
}

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const PENALTY_TOLERANCE: f64 = 1e-3;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub steps: usize,
    pub max_relative_error: f64,
}

/// One client under `D^2_0 G^2_0`, shuffling off, against the monolithic
/// reference: the largest relative gap between per-step losses.
pub fn centralized_equivalence(rounds: u64) -> Result<Equivalence> {
    use vtgan_core::centralized::CentralizedGan;
    use vtgan_core::nn::Residual;
    use vtgan_core::protocol::{PartitionConfig, TrainingConfig};

    let (table, _) = vtgan_core::fixtures::correlated(300, 11)?;
    let cfg = TrainingConfig {
        rounds,
        batch: 50,
        noise_dim: 16,
        shuffle: false,
        ..TrainingConfig::default()
    };
    let partition = PartitionConfig {
        block_dim: 32,
        ..PartitionConfig::new(2, 0, 2, 0)
    };
    let mut fed = Federation::new(vec![table.clone()], &partition, &cfg)?;
    fed.train(&mut ())?;
    let mut reference = CentralizedGan::new(table, 32, Residual::Concat, &cfg)?;
    reference.train()?;
    let (a, b) = (fed.records(), reference.records());
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.phase != y.phase) {
        return Err(Error::Config("step sequences of the two runs differ".into()));
    }
    let max_relative_error = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x.loss - y.loss).abs() / x.loss.abs().max(y.loss.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(Equivalence {
        steps: a.len(),
        max_relative_error,
    })
}
