use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::message::{Envelope, Message, Party, Path, Phase};
use super::plan::{split_logits, PartitionPlan, ShardSpecs};
use super::{ProtocolError, Shard, TrainingConfig};
use crate::cond::CvLayout;
use crate::nn::{penalty_from_input, Graph, Mode, NodeId, Tensor2};
use crate::rng::{stream, StreamRng};

/// Losses of one discriminator or generator update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: u64,
    pub phase: Phase,
    /// Discriminator: critic loss including the penalty. Generator:
    /// adversarial loss plus the conditional loss.
    pub loss: f64,
    /// `mean D(real) - mean D(fake)`; discriminator steps only.
    pub wasserstein: f64,
    pub penalty: f64,
    pub cond: f64,
}

pub(crate) struct ServerRngs {
    pub contributor: StreamRng,
    pub noise: StreamRng,
    pub gp: StreamRng,
    pub dropout: StreamRng,
    pub synth_contributor: StreamRng,
    pub synth_noise: StreamRng,
}

impl ServerRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            contributor: stream(seed, "contributor", 0),
            noise: stream(seed, "noise", 0),
            gp: stream(seed, "gp", 0),
            dropout: stream(seed, "dropout", 0),
            synth_contributor: stream(seed, "synth:contributor", 0),
            synth_noise: stream(seed, "synth:noise", 0),
        }
    }
}

/// `batch x dim` standard normal draws, row major.
pub(crate) fn normal_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor2::from_vec(rows, cols, data).expect("noise shape")
}

enum Stage {
    Idle,
    AwaitCv {
        phase: Phase,
        contributor: usize,
    },
    Disc {
        contributor: usize,
        cv: Tensor2,
        idx: Vec<usize>,
        fake: Vec<Option<Tensor2>>,
        real: Vec<Option<Tensor2>>,
    },
    GenDown {
        graph: Graph,
        params: Vec<NodeId>,
        pieces: Vec<NodeId>,
        cv: Tensor2,
        fake: Vec<Option<Tensor2>>,
    },
    GenUp {
        graph: Graph,
        params: Vec<NodeId>,
        pieces: Vec<NodeId>,
        grads: Vec<Option<Tensor2>>,
        cond: f64,
        loss: f64,
    },
    Barrier {
        acks: Vec<bool>,
    },
    SynthRows {
        rows: Vec<Option<Tensor2>>,
    },
}

pub struct ServerState {
    pub gen_top: Shard,
    pub cv_filter: Shard,
    pub disc_top: Shard,
    specs: ShardSpecs,
    plan: PartitionPlan,
    cv_layout: CvLayout,
    cfg: TrainingConfig,
    rngs: ServerRngs,
    round: u64,
    stage: Stage,
    records: Vec<StepRecord>,
    synth: Option<Vec<Tensor2>>,
}

impl ServerState {
    pub(crate) fn new(
        gen_top: Shard,
        cv_filter: Shard,
        disc_top: Shard,
        specs: ShardSpecs,
        plan: PartitionPlan,
        cv_layout: CvLayout,
        cfg: &TrainingConfig,
    ) -> Self {
        Self {
            gen_top,
            cv_filter,
            disc_top,
            specs,
            plan,
            cv_layout,
            cfg: cfg.clone(),
            rngs: ServerRngs::new(cfg.seeds.server),
            round: 0,
            stage: Stage::Idle,
            records: Vec::new(),
            synth: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.stage, Stage::Idle)
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn specs(&self) -> &ShardSpecs {
        &self.specs
    }

    fn n_clients(&self) -> usize {
        self.plan.n_clients()
    }

    fn desync(&self, detail: String) -> ProtocolError {
        ProtocolError::Desync {
            party: Party::Server.to_string(),
            detail,
        }
    }

    fn to_client(&self, phase: Phase, client: usize, message: Message) -> Envelope {
        Envelope {
            round: self.round,
            phase,
            sender: Party::Server,
            receiver: Party::Client(client),
            message,
        }
    }

    fn broadcast(&self, phase: Phase, message: Message) -> Vec<Envelope> {
        (0..self.n_clients())
            .map(|i| self.to_client(phase, i, message.clone()))
            .collect()
    }

    fn require_idle(&self, what: &str) -> Result<(), ProtocolError> {
        if self.is_idle() {
            Ok(())
        } else {
            Err(self.desync(format!("{what} started while a step is in progress")))
        }
    }

    /// Opens discriminator update `k`, or the generator update when
    /// `phase` is [`Phase::Gen`], or a synthesis batch of `batch` rows.
    pub fn start_step(&mut self, phase: Phase, batch: usize) -> Result<Vec<Envelope>, ProtocolError> {
        self.require_idle("step")?;
        let rng = match phase {
            Phase::Disc(_) | Phase::Gen => &mut self.rngs.contributor,
            Phase::Synth => &mut self.rngs.synth_contributor,
            Phase::Shuffle => return Err(self.desync("use start_barrier for the shuffle phase".into())),
        };
        let contributor = self.cv_layout.sample_contributor(&self.plan.ratio, rng)?;
        self.stage = Stage::AwaitCv { phase, contributor };
        Ok(self.broadcast(phase, Message::CvRequest { contributor, batch }))
    }

    pub fn start_barrier(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        self.require_idle("barrier")?;
        self.stage = Stage::Barrier {
            acks: vec![false; self.n_clients()],
        };
        Ok(self.broadcast(
            Phase::Shuffle,
            Message::ShuffleBarrier {
                round: self.round,
                shuffle: self.cfg.shuffle,
            },
        ))
    }

    /// Asks every client to decode and publish its generated rows.
    pub fn start_publication(&mut self, n: usize) -> Result<Vec<Envelope>, ProtocolError> {
        self.require_idle("publication")?;
        self.stage = Stage::SynthRows {
            rows: vec![None; self.n_clients()],
        };
        Ok(self.broadcast(Phase::Synth, Message::SynthRequest { n }))
    }

    /// Published rows per client, once every client has answered.
    pub fn take_published(&mut self) -> Option<Vec<Tensor2>> {
        self.synth.take()
    }

    pub fn handle(&mut self, env: Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        let Party::Client(from) = env.sender else {
            return Err(self.desync("message from the server to itself".into()));
        };
        if env.receiver != Party::Server || from >= self.n_clients() {
            return Err(self.desync(format!("misrouted envelope from {}", env.sender)));
        }
        if env.round != self.round {
            return Err(self.desync(format!("envelope for round {} at round {}", env.round, self.round)));
        }
        let stage = core::mem::replace(&mut self.stage, Stage::Idle);
        match (stage, env.message) {
            (Stage::AwaitCv { phase, contributor }, Message::CvAnnounce { cv, contributor: c, idx })
                if phase == env.phase =>
            {
                if c != contributor || from != contributor {
                    return Err(self.desync(format!("announcement from client {from}, expected {contributor}")));
                }
                self.on_cv(phase, contributor, cv, idx)
            }
            (
                Stage::Disc {
                    contributor,
                    cv,
                    idx,
                    mut fake,
                    mut real,
                },
                Message::BottomDiscLogits { path, logits },
            ) if matches!(env.phase, Phase::Disc(_)) => {
                let slot = match path {
                    Path::Fake => &mut fake[from],
                    Path::Real => &mut real[from],
                };
                if slot.replace(logits).is_some() {
                    return Err(self.desync(format!("duplicate {path:?} logits from client {from}")));
                }
                if fake.iter().chain(real.iter()).all(Option::is_some) {
                    let fake: Vec<Tensor2> = fake.into_iter().flatten().collect();
                    let real: Vec<Tensor2> = real.into_iter().flatten().collect();
                    self.disc_update(env.phase, contributor, &cv, &idx, fake, real)
                } else {
                    self.stage = Stage::Disc {
                        contributor,
                        cv,
                        idx,
                        fake,
                        real,
                    };
                    Ok(Vec::new())
                }
            }
            (
                Stage::GenDown {
                    graph,
                    params,
                    pieces,
                    cv,
                    mut fake,
                },
                Message::BottomDiscLogits { path: Path::Fake, logits },
            ) if env.phase == Phase::Gen => {
                if fake[from].replace(logits).is_some() {
                    return Err(self.desync(format!("duplicate logits from client {from}")));
                }
                if fake.iter().all(Option::is_some) {
                    let fake: Vec<Tensor2> = fake.into_iter().flatten().collect();
                    self.gen_critic(graph, params, pieces, &cv, fake)
                } else {
                    self.stage = Stage::GenDown {
                        graph,
                        params,
                        pieces,
                        cv,
                        fake,
                    };
                    Ok(Vec::new())
                }
            }
            (
                Stage::GenUp {
                    graph,
                    params,
                    pieces,
                    mut grads,
                    cond,
                    loss,
                },
                Message::GradUp { grad, cond_loss },
            ) if env.phase == Phase::Gen => {
                if grads[from].replace(grad).is_some() {
                    return Err(self.desync(format!("duplicate gradient from client {from}")));
                }
                let cond = cond + cond_loss;
                if grads.iter().all(Option::is_some) {
                    let grads: Vec<Tensor2> = grads.into_iter().flatten().collect();
                    self.gen_update(graph, params, pieces, grads, cond, loss)?;
                } else {
                    self.stage = Stage::GenUp {
                        graph,
                        params,
                        pieces,
                        grads,
                        cond,
                        loss,
                    };
                }
                Ok(Vec::new())
            }
            (Stage::Barrier { mut acks }, Message::ShuffleBarrier { round, shuffle }) if env.phase == Phase::Shuffle => {
                if round != self.round || shuffle != self.cfg.shuffle {
                    return Err(self.desync(format!("client {from} acknowledged round {round}")));
                }
                if core::mem::replace(&mut acks[from], true) {
                    return Err(self.desync(format!("duplicate barrier ack from client {from}")));
                }
                if acks.iter().all(|&a| a) {
                    self.round += 1;
                } else {
                    self.stage = Stage::Barrier { acks };
                }
                Ok(Vec::new())
            }
            (Stage::SynthRows { mut rows }, Message::SynthRows { rows: r }) if env.phase == Phase::Synth => {
                if rows[from].replace(r).is_some() {
                    return Err(self.desync(format!("duplicate rows from client {from}")));
                }
                if rows.iter().all(Option::is_some) {
                    self.synth = Some(rows.into_iter().flatten().collect());
                } else {
                    self.stage = Stage::SynthRows { rows };
                }
                Ok(Vec::new())
            }
            (_, m) => Err(self.desync(format!("unexpected {} from client {from} in {:?}", m.kind(), env.phase))),
        }
    }

    fn gen_input(&mut self, phase: Phase, cv: &Tensor2) -> Result<Tensor2, ProtocolError> {
        let rng = if phase == Phase::Synth {
            &mut self.rngs.synth_noise
        } else {
            &mut self.rngs.noise
        };
        let z = normal_noise(cv.rows(), self.cfg.noise_dim, rng);
        Ok(Tensor2::hcat(&[&z, cv])?)
    }

    fn pieces(&self, out: &Tensor2) -> Result<Vec<Tensor2>, ProtocolError> {
        if self.specs.gen_broadcast {
            Ok(vec![out.clone(); self.n_clients()])
        } else {
            split_logits(out, &self.specs.gen_split)
        }
    }

    fn send_pieces(&self, phase: Phase, pieces: Vec<Tensor2>) -> Vec<Envelope> {
        pieces
            .into_iter()
            .enumerate()
            .map(|(i, piece)| self.to_client(phase, i, Message::SplitGenLogits { piece }))
            .collect()
    }

    fn on_cv(&mut self, phase: Phase, contributor: usize, cv: Tensor2, idx: Option<Vec<usize>>) -> Result<Vec<Envelope>, ProtocolError> {
        if cv.cols() != self.cv_layout.width || cv.rows() == 0 {
            return Err(ProtocolError::Shape(format!(
                "cv batch of shape {:?}, layout width {}",
                cv.shape(),
                self.cv_layout.width
            )));
        }
        let input = self.gen_input(phase, &cv)?;
        match phase {
            Phase::Disc(_) => {
                let Some(idx) = idx else {
                    return Err(self.desync("discriminator step without row indices".into()));
                };
                if idx.len() != cv.rows() {
                    return Err(self.desync("row indices and cv batch differ in length".into()));
                }
                let mut g = Graph::new();
                let x = g.constant(input);
                let out = self.gen_top.net.build(&mut g, x, Mode::Train, &mut self.rngs.dropout, false)?;
                let pieces = self.pieces(g.value(out.output))?;
                let n = self.n_clients();
                self.stage = Stage::Disc {
                    contributor,
                    cv,
                    idx,
                    fake: vec![None; n],
                    real: vec![None; n],
                };
                Ok(self.send_pieces(phase, pieces))
            }
            Phase::Gen => {
                if idx.is_some() {
                    return Err(self.desync("generator step announced row indices".into()));
                }
                let mut g = Graph::new();
                let x = g.constant(input);
                let out = self.gen_top.net.build(&mut g, x, Mode::Train, &mut self.rngs.dropout, true)?;
                let pieces = self.pieces(g.value(out.output))?;
                let nodes = if self.specs.gen_broadcast {
                    vec![out.output; self.n_clients()]
                } else {
                    let mut start = 0;
                    let mut nodes = Vec::new();
                    for &w in &self.specs.gen_split {
                        nodes.push(g.slice_cols(out.output, start, w)?);
                        start += w;
                    }
                    nodes
                };
                self.stage = Stage::GenDown {
                    graph: g,
                    params: out.params,
                    pieces: nodes,
                    cv,
                    fake: vec![None; self.n_clients()],
                };
                Ok(self.send_pieces(phase, pieces))
            }
            Phase::Synth => {
                if idx.is_some() {
                    return Err(self.desync("synthesis announced row indices".into()));
                }
                let mut g = Graph::new();
                let x = g.constant(input);
                let out = self.gen_top.net.build(&mut g, x, Mode::Eval, &mut self.rngs.dropout, false)?;
                let pieces = self.pieces(g.value(out.output))?;
                Ok(self.send_pieces(phase, pieces))
            }
            Phase::Shuffle => Err(self.desync("cv announced in the shuffle phase".into())),
        }
    }

    fn disc_update(
        &mut self,
        phase: Phase,
        contributor: usize,
        cv: &Tensor2,
        idx: &[usize],
        fake: Vec<Tensor2>,
        real: Vec<Tensor2>,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        let n = cv.rows();
        let idx: Arc<[usize]> = Arc::from(idx);
        let mut g = Graph::new();
        let mut fake_leaves = Vec::new();
        let mut real_leaves = Vec::new();
        let mut fake_parts = Vec::new();
        let mut real_parts = Vec::new();
        for (i, (f, r)) in fake.into_iter().zip(real).enumerate() {
            if f.rows() != n {
                return Err(ProtocolError::Shape(format!("client {i} sent {} fake rows for {n}", f.rows())));
            }
            let fl = g.variable(f);
            let rows = r.rows();
            let rl = g.variable(r);
            let rp = if i == contributor {
                if rows != n {
                    return Err(ProtocolError::Shape(format!("contributor sent {rows} real rows for {n}")));
                }
                rl
            } else {
                if let Some(&bad) = idx.iter().find(|&&j| j >= rows) {
                    return Err(ProtocolError::IndexOutOfRange { index: bad, rows });
                }
                g.gather_rows(rl, idx.clone())?
            };
            fake_leaves.push(fl);
            real_leaves.push(rl);
            fake_parts.push(fl);
            real_parts.push(rp);
        }
        let cv_node = g.constant(cv.clone());
        let filter = self.cv_filter.net.build(&mut g, cv_node, Mode::Train, &mut self.rngs.dropout, true)?;
        fake_parts.push(filter.output);
        real_parts.push(filter.output);
        let fake_in = g.concat_cols(&fake_parts)?;
        let real_in = g.concat_cols(&real_parts)?;
        let top = self.disc_top.net.bind_params(&mut g, true);
        let y_fake = self.disc_top.net.build_with(&mut g, fake_in, &top, Mode::Train, &mut self.rngs.dropout)?;
        let y_real = self.disc_top.net.build_with(&mut g, real_in, &top, Mode::Train, &mut self.rngs.dropout)?;

        let client_width = g.shape(fake_in).1 - g.shape(filter.output).1;
        let mut mixed = Tensor2::zeros(n, client_width);
        {
            let fv = g.value(fake_in);
            let rv = g.value(real_in);
            for r in 0..n {
                let e: f64 = self.rngs.gp.random();
                for c in 0..client_width {
                    mixed.set(r, c, e * rv.get(r, c) + (1.0 - e) * fv.get(r, c));
                }
            }
        }
        let mixed = g.constant(mixed);
        let x_hat = g.concat_cols(&[mixed, filter.output])?;
        let y_hat = self.disc_top.net.build_with(&mut g, x_hat, &top, Mode::Train, &mut self.rngs.dropout)?;
        let pen = penalty_from_input(&mut g, x_hat, y_hat, self.cfg.lambda)?;

        let mf = g.mean_all(y_fake);
        let mr = g.mean_all(y_real);
        let w = g.sub(mf, mr)?;
        let loss = g.add(w, pen)?;
        let loss_value = g.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(ProtocolError::NonFinite("discriminator loss".into()));
        }
        let n_top = top.len();
        let n_filter = filter.params.len();
        let mut wrt = top;
        wrt.extend(&filter.params);
        wrt.extend(&fake_leaves);
        wrt.extend(&real_leaves);
        let mut grads = g.backward_scalar(loss, &wrt)?;
        let leaf_grads = grads.split_off(n_top + n_filter);
        let filter_grads = grads.split_off(n_top);
        let top_buf = self.disc_top.net.grad_buffer(&grads);
        let filter_buf = self.cv_filter.net.grad_buffer(&filter_grads);
        self.disc_top.update(&top_buf, &self.cfg.adam)?;
        self.cv_filter.update(&filter_buf, &self.cfg.adam)?;
        self.records.push(StepRecord {
            round: self.round,
            phase,
            loss: loss_value,
            wasserstein: -g.value(w).get(0, 0),
            penalty: g.value(pen).get(0, 0),
            cond: 0.0,
        });
        if self.plan.config.n4 == 0 {
            return Ok(Vec::new());
        }
        let k = self.n_clients();
        let mut out = Vec::with_capacity(2 * k);
        for (i, leaf) in fake_leaves.iter().chain(&real_leaves).enumerate() {
            let (client, path) = if i < k { (i, Path::Fake) } else { (i - k, Path::Real) };
            let (r, c) = g.shape(*leaf);
            let grad = leaf_grads[i].clone().unwrap_or_else(|| Tensor2::zeros(r, c));
            out.push(self.to_client(phase, client, Message::GradDown { path, grad }));
        }
        Ok(out)
    }

    fn gen_critic(
        &mut self,
        graph: Graph,
        params: Vec<NodeId>,
        pieces: Vec<NodeId>,
        cv: &Tensor2,
        fake: Vec<Tensor2>,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        let mut g = Graph::new();
        let leaves: Vec<NodeId> = fake.into_iter().map(|f| g.variable(f)).collect();
        let cv_node = g.constant(cv.clone());
        let filter = self.cv_filter.net.build(&mut g, cv_node, Mode::Train, &mut self.rngs.dropout, false)?;
        let mut parts = leaves.clone();
        parts.push(filter.output);
        let x = g.concat_cols(&parts)?;
        let top = self.disc_top.net.build(&mut g, x, Mode::Train, &mut self.rngs.dropout, false)?;
        let m = g.mean_all(top.output);
        let loss = g.scale(m, -1.0);
        let loss_value = g.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(ProtocolError::NonFinite("generator loss".into()));
        }
        let grads = g.backward_scalar(loss, &leaves)?;
        let out = grads
            .into_iter()
            .zip(&leaves)
            .enumerate()
            .map(|(i, (grad, &leaf))| {
                let (r, c) = g.shape(leaf);
                let grad = grad.unwrap_or_else(|| Tensor2::zeros(r, c));
                self.to_client(Phase::Gen, i, Message::GradDown { path: Path::Fake, grad })
            })
            .collect();
        self.stage = Stage::GenUp {
            graph,
            params,
            pieces,
            grads: vec![None; self.n_clients()],
            cond: 0.0,
            loss: loss_value,
        };
        Ok(out)
    }

    fn gen_update(
        &mut self,
        mut graph: Graph,
        params: Vec<NodeId>,
        pieces: Vec<NodeId>,
        grads: Vec<Tensor2>,
        cond: f64,
        loss: f64,
    ) -> Result<(), ProtocolError> {
        if self.gen_top.has_params() {
            let seeds: Vec<(NodeId, Tensor2)> = pieces.into_iter().zip(grads).collect();
            let g = graph.backward(&seeds, &params)?;
            let buf = self.gen_top.net.grad_buffer(&g);
            self.gen_top.update(&buf, &self.cfg.adam)?;
        }
        self.records.push(StepRecord {
            round: self.round,
            phase: Phase::Gen,
            loss: loss + cond,
            wasserstein: 0.0,
            penalty: 0.0,
            cond,
        });
        Ok(())
    }
}
