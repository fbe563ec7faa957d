use alloc::format;
use alloc::vec::Vec;

use super::client::{ClientData, ClientState};
use super::message::{Envelope, InProcess, Observer, Party, Phase, Transport};
use super::plan::{plan_partition, PartitionConfig, PartitionPlan, ShardSpecs};
use super::server::{ServerState, StepRecord};
use super::{ProtocolError, Shard, TrainingConfig};
use crate::cond::{compute_ratio_vector, CvLayout};
use crate::data::{hconcat, Column, ColumnAssignment, ColumnKind, DataError, RawTable, TableSchema};
use crate::nn::{Net, Tensor2};
use crate::rng::stream;

/// A server and its clients wired to one transport.
pub struct Federation<T: Transport = InProcess> {
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    transport: T,
    cfg: TrainingConfig,
    cv_layout: CvLayout,
}

impl Federation<InProcess> {
    /// Fits each client's encoder on its own table and initialises every
    /// shard from the configured seeds.
    pub fn new(tables: Vec<RawTable>, partition: &PartitionConfig, cfg: &TrainingConfig) -> Result<Self, ProtocolError> {
        Self::from_data(prepare_clients(tables, cfg)?, partition, cfg, InProcess::new())
    }
}

/// Each client fits its encoder on its own table and encodes it with its
/// own stream.
pub fn prepare_clients(tables: Vec<RawTable>, cfg: &TrainingConfig) -> Result<Vec<ClientData>, ProtocolError> {
    tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = stream(cfg.seeds.clients, "encode", i as u64);
            ClientData::prepare(t, &cfg.gmm, &mut rng)
        })
        .collect()
}

impl<T: Transport> Federation<T> {
    pub fn from_data(data: Vec<ClientData>, partition: &PartitionConfig, cfg: &TrainingConfig, transport: T) -> Result<Self, ProtocolError> {
        let first = data.first().ok_or_else(|| ProtocolError::Config("no clients".into()))?;
        let n_rows = first.raw.n_rows();
        if data.iter().any(|d| d.raw.n_rows() != n_rows) {
            return Err(DataError::Alignment("clients hold different row counts".into()).into());
        }
        cfg.validate(n_rows)?;
        let schemas: Vec<TableSchema> = data.iter().map(|d| d.raw.schema.clone()).collect();
        let assignment = ColumnAssignment::new(
            schemas
                .iter()
                .map(|s| s.names().into_iter().map(Into::into).collect())
                .collect(),
        );
        let ratio = compute_ratio_vector(&assignment)?;
        let cv_layout = CvLayout::new(&schemas);
        if cv_layout.width == 0 {
            return Err(crate::cond::ConditioningError::Unavailable.into());
        }
        let plan = plan_partition(partition, &ratio)?;
        let encoded: Vec<usize> = data.iter().map(|d| d.encoded.matrix.cols()).collect();
        let specs = plan.shard_specs(cfg.noise_dim, cv_layout.width, &encoded)?;
        let server = build_server(&specs, &plan, &cv_layout, cfg)?;
        let clients = data
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let gen = Shard::new(Net::new(
                    specs.gen_bottoms[i].clone(),
                    &mut stream(cfg.seeds.clients, "init:gen_bottom", i as u64),
                )?);
                let disc = Shard::new(Net::new(
                    specs.disc_bottoms[i].clone(),
                    &mut stream(cfg.seeds.clients, "init:disc_bottom", i as u64),
                )?);
                Ok(ClientState::new(i, d, gen, disc, cv_layout.clone(), cfg))
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        Ok(Self {
            server,
            clients,
            transport,
            cfg: cfg.clone(),
            cv_layout,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    /// Re-keys the clients' publication permutation.
    pub fn set_publication_seed(&mut self, seed: u64) {
        self.cfg.seeds.publication = seed;
        for c in &mut self.clients {
            c.set_publication_seed(seed);
        }
    }

    pub fn plan(&self) -> &PartitionPlan {
        self.server.plan()
    }

    pub fn specs(&self) -> &ShardSpecs {
        self.server.specs()
    }

    pub fn cv_layout(&self) -> &CvLayout {
        &self.cv_layout
    }

    pub fn records(&self) -> &[StepRecord] {
        self.server.records()
    }

    pub fn round(&self) -> u64 {
        self.server.round()
    }

    /// Current (shuffled) client tables.
    pub fn tables(&self) -> Vec<&RawTable> {
        self.clients.iter().map(|c| &c.data.raw).collect()
    }

    fn send_all(&mut self, envs: Vec<Envelope>) -> Result<(), ProtocolError> {
        for e in envs {
            self.transport.send(e)?;
        }
        Ok(())
    }

    /// Delivers queued envelopes until the transport runs dry.
    fn pump(&mut self, observer: &mut dyn Observer) -> Result<(), ProtocolError> {
        while let Some(env) = self.transport.next()? {
            observer.observe(&env);
            let replies = match env.receiver {
                Party::Server => self.server.handle(env)?,
                Party::Client(i) => {
                    let client = self.clients.get_mut(i).ok_or_else(|| ProtocolError::Desync {
                        party: "transport".into(),
                        detail: format!("no client {i}"),
                    })?;
                    client.handle(env)?
                }
            };
            self.send_all(replies)?;
        }
        if !self.server.is_idle() {
            return Err(ProtocolError::Desync {
                party: "server".into(),
                detail: "step stalled with no messages in flight".into(),
            });
        }
        Ok(())
    }

    /// One discriminator or generator update on a fresh batch.
    pub fn step(&mut self, phase: Phase, observer: &mut dyn Observer) -> Result<(), ProtocolError> {
        if !matches!(phase, Phase::Disc(_) | Phase::Gen) {
            return Err(ProtocolError::Config(format!("{phase:?} is not a training step")));
        }
        let envs = self.server.start_step(phase, self.cfg.batch)?;
        self.send_all(envs)?;
        self.pump(observer)
    }

    /// `disc_epochs` discriminator updates, one generator update, then
    /// the shuffle barrier.
    pub fn train_round(&mut self, observer: &mut dyn Observer) -> Result<(), ProtocolError> {
        for k in 0..self.cfg.disc_epochs {
            self.step(Phase::Disc(k), observer)?;
        }
        self.step(Phase::Gen, observer)?;
        let envs = self.server.start_barrier()?;
        self.send_all(envs)?;
        self.pump(observer)?;
        if let Some(c) = self.clients.iter().find(|c| c.round() != self.server.round()) {
            return Err(ProtocolError::Desync {
                party: format!("client{}", c.id),
                detail: format!("at round {} after the barrier, server at {}", c.round(), self.server.round()),
            });
        }
        Ok(())
    }

    pub fn train(&mut self, observer: &mut dyn Observer) -> Result<(), ProtocolError> {
        for _ in 0..self.cfg.rounds {
            self.train_round(observer)?;
        }
        Ok(())
    }

    /// Generates `n` rows in batches and returns the published table, its
    /// columns in client order.
    pub fn synthesize(&mut self, n: usize, observer: &mut dyn Observer) -> Result<RawTable, ProtocolError> {
        if n == 0 {
            return Err(ProtocolError::Config("cannot synthesize zero rows".into()));
        }
        let batch = self.cfg.batch;
        for b in 0..n.div_ceil(batch) {
            let rows = batch.min(n - b * batch);
            let envs = self.server.start_step(Phase::Synth, rows)?;
            self.send_all(envs)?;
            self.pump(observer)?;
        }
        let envs = self.server.start_publication(n)?;
        self.send_all(envs)?;
        self.pump(observer)?;
        let published = self.server.take_published().ok_or_else(|| ProtocolError::Desync {
            party: "server".into(),
            detail: "publication incomplete".into(),
        })?;
        let row_ids: Vec<u64> = (0..n as u64).collect();
        let parts = published
            .iter()
            .zip(&self.clients)
            .map(|(m, c)| matrix_to_table(&c.data.raw.schema, m, row_ids.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(hconcat(&parts)?)
    }
}

fn build_server(specs: &ShardSpecs, plan: &PartitionPlan, cv_layout: &CvLayout, cfg: &TrainingConfig) -> Result<ServerState, ProtocolError> {
    let seed = cfg.seeds.server;
    let gen_top = Shard::new(Net::new(specs.gen_top.clone(), &mut stream(seed, "init:gen_top", 0))?);
    let cv_filter = Shard::new(Net::new(specs.cv_filter.clone(), &mut stream(seed, "init:cv_filter", 0))?);
    let disc_top = Shard::new(Net::new(specs.disc_top.clone(), &mut stream(seed, "init:disc_top", 0))?);
    Ok(ServerState::new(
        gen_top,
        cv_filter,
        disc_top,
        specs.clone(),
        plan.clone(),
        cv_layout.clone(),
        cfg,
    ))
}

/// Inverse of the `SynthRows` encoding: category indices and values.
pub fn matrix_to_table(schema: &TableSchema, m: &Tensor2, row_ids: Vec<u64>) -> Result<RawTable, ProtocolError> {
    if m.cols() != schema.columns.len() || m.rows() != row_ids.len() {
        return Err(ProtocolError::Shape(format!(
            "published matrix {:?} for {} columns and {} rows",
            m.shape(),
            schema.columns.len(),
            row_ids.len()
        )));
    }
    let columns = schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            let values = (0..m.rows()).map(|r| m.get(r, c));
            match col.kind {
                ColumnKind::Categorical => Column::Categorical(values.map(|v| v as u32).collect()),
                _ => Column::Numeric(values.collect()),
            }
        })
        .collect();
    Ok(RawTable::new(schema.clone(), columns, row_ids)?)
}
