use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::message::{Envelope, Message, Party, Path, Phase};
use super::{ProtocolError, Shard, TrainingConfig};
use crate::cond::{draw_at_client, CategoryIndex, CvDraw, CvLayout};
use crate::data::{fisher_yates, Column, RawTable, ShuffleState};
use crate::encode::{EncodedTable, TableEncoder};
use crate::nn::{
    apply_output_activations, conditional_cross_entropy, Graph, Mode, NodeId, OutputSpan, Tensor2,
};
use crate::rng::{stream, StreamRng};

/// A client's table together with its fitted encoder and encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientData {
    pub raw: RawTable,
    pub encoder: TableEncoder,
    pub encoded: EncodedTable,
}

impl ClientData {
    pub fn prepare<R: Rng + ?Sized>(raw: RawTable, cfg: &crate::encode::GmmConfig, rng: &mut R) -> Result<Self, ProtocolError> {
        let encoder = TableEncoder::fit(&raw, cfg)?;
        Self::with_encoder(raw, encoder, rng)
    }

    pub fn with_encoder<R: Rng + ?Sized>(raw: RawTable, encoder: TableEncoder, rng: &mut R) -> Result<Self, ProtocolError> {
        let encoded = encoder.encode(&raw, rng)?;
        Ok(Self { raw, encoder, encoded })
    }

    pub fn permute(&mut self, perm: &[usize]) {
        self.raw = self.raw.permute(perm);
        self.encoded = self.encoded.permute(perm);
    }

    /// Targets for the conditional loss: the one-hot span of each chosen
    /// column and the chosen category.
    pub(crate) fn ce_targets(&self, chosen: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
        chosen
            .iter()
            .map(|&(col, cat)| {
                let part = self.encoded.layout[col].parts[0];
                (part.start, part.width, cat)
            })
            .collect()
    }
}

/// Converts a decoded table to the numeric matrix carried by `SynthRows`.
pub(crate) fn table_to_matrix(t: &RawTable) -> Tensor2 {
    let mut m = Tensor2::zeros(t.n_rows(), t.n_cols());
    for (c, col) in t.columns.iter().enumerate() {
        for r in 0..t.n_rows() {
            let v = match col {
                Column::Categorical(v) => v[r] as f64,
                Column::Numeric(v) => v[r],
            };
            m.set(r, c, v);
        }
    }
    m
}

enum Pending {
    Disc {
        graph: Graph,
        params: Vec<NodeId>,
        fake: NodeId,
        real: NodeId,
        grad_fake: Option<Tensor2>,
        grad_real: Option<Tensor2>,
    },
    Gen {
        graph: Graph,
        params: Vec<NodeId>,
        input: NodeId,
        fake: NodeId,
        ce: Option<NodeId>,
    },
}

struct ClientRngs {
    cv: StreamRng,
    gumbel: StreamRng,
    dropout: StreamRng,
    synth_cv: StreamRng,
}

pub struct ClientState {
    pub id: usize,
    pub data: ClientData,
    pub gen: Shard,
    pub disc: Shard,
    index: CategoryIndex,
    spans: Vec<OutputSpan>,
    cv_layout: CvLayout,
    shuffle: ShuffleState,
    cfg: TrainingConfig,
    rngs: ClientRngs,
    round: u64,
    contributor: Option<usize>,
    draw: Option<CvDraw>,
    pending: Option<Pending>,
    synth: Vec<Tensor2>,
}

impl ClientState {
    pub fn new(id: usize, data: ClientData, gen: Shard, disc: Shard, cv_layout: CvLayout, cfg: &TrainingConfig) -> Self {
        let seed = cfg.seeds.clients;
        let i = id as u64;
        Self {
            id,
            index: CategoryIndex::new(&data.raw),
            spans: data.encoded.output_spans(),
            data,
            gen,
            disc,
            cv_layout,
            shuffle: ShuffleState::new(cfg.seeds.shuffle),
            cfg: cfg.clone(),
            rngs: ClientRngs {
                cv: stream(seed, "cv", i),
                gumbel: stream(seed, "gumbel", i),
                dropout: stream(seed, "dropout", i),
                synth_cv: stream(seed, "synth:cv", i),
            },
            round: 0,
            contributor: None,
            draw: None,
            pending: None,
            synth: Vec::new(),
        }
    }

    pub fn party(&self) -> Party {
        Party::Client(self.id)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn set_publication_seed(&mut self, seed: u64) {
        self.cfg.seeds.publication = seed;
    }

    pub fn shuffle_state(&self) -> ShuffleState {
        self.shuffle
    }

    fn desync(&self, detail: alloc::string::String) -> ProtocolError {
        ProtocolError::Desync {
            party: self.party().to_string(),
            detail,
        }
    }

    fn reply(&self, env: &Envelope, message: Message) -> Envelope {
        Envelope {
            round: self.round,
            phase: env.phase,
            sender: self.party(),
            receiver: Party::Server,
            message,
        }
    }

    pub fn handle(&mut self, env: Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        if env.receiver != self.party() {
            return Err(self.desync(format!("received an envelope for {}", env.receiver)));
        }
        if env.round != self.round {
            return Err(self.desync(format!("envelope for round {} at round {}", env.round, self.round)));
        }
        match (&env.message, env.phase) {
            (Message::CvRequest { contributor, batch }, phase) => {
                self.contributor = Some(*contributor);
                self.draw = None;
                if *contributor != self.id {
                    return Ok(Vec::new());
                }
                let rng = if phase == Phase::Synth {
                    &mut self.rngs.synth_cv
                } else {
                    &mut self.rngs.cv
                };
                let draw = draw_at_client(&self.index, &self.cv_layout, self.id, *batch, rng)?;
                let idx = matches!(phase, Phase::Disc(_)).then(|| draw.idx_batch.clone());
                let msg = Message::CvAnnounce {
                    cv: draw.cv_batch.clone(),
                    contributor: self.id,
                    idx,
                };
                self.draw = Some(draw);
                Ok(vec![self.reply(&env, msg)])
            }
            (Message::SplitGenLogits { piece }, Phase::Disc(_)) => self.disc_forward(&env, piece),
            (Message::SplitGenLogits { piece }, Phase::Gen) => self.gen_forward(&env, piece),
            (Message::SplitGenLogits { piece }, Phase::Synth) => {
                let mut g = Graph::new();
                let x = g.constant(piece.clone());
                let out = self.gen.net.build(&mut g, x, Mode::Eval, &mut self.rngs.dropout, false)?;
                let y = apply_output_activations(
                    &mut g,
                    out.output,
                    &self.spans,
                    self.cfg.temperature,
                    Mode::Eval,
                    &mut self.rngs.gumbel,
                )?;
                self.synth.push(g.value(y).clone());
                Ok(Vec::new())
            }
            (Message::GradDown { path, grad }, Phase::Disc(_)) => {
                let Some(Pending::Disc {
                    graph,
                    params,
                    fake,
                    real,
                    grad_fake,
                    grad_real,
                }) = self.pending.as_mut()
                else {
                    return Err(self.desync("unexpected discriminator gradient".into()));
                };
                match path {
                    Path::Fake => *grad_fake = Some(grad.clone()),
                    Path::Real => *grad_real = Some(grad.clone()),
                }
                if let (Some(gf), Some(gr)) = (grad_fake.as_ref(), grad_real.as_ref()) {
                    let grads = graph.backward(&[(*fake, gf.clone()), (*real, gr.clone())], params)?;
                    let buffer = self.disc.net.grad_buffer(&grads);
                    self.pending = None;
                    self.disc.update(&buffer, &self.cfg.adam)?;
                }
                Ok(Vec::new())
            }
            (Message::GradDown { grad, .. }, Phase::Gen) => {
                let Some(Pending::Gen {
                    mut graph,
                    params,
                    input,
                    fake,
                    ce,
                }) = self.pending.take()
                else {
                    return Err(self.desync("unexpected generator gradient".into()));
                };
                let mut seeds = vec![(fake, grad.clone())];
                let mut cond_loss = 0.0;
                if let Some(ce) = ce {
                    cond_loss = graph.value(ce).get(0, 0);
                    seeds.push((ce, Tensor2::filled(1, 1, 1.0)));
                }
                let mut wrt = params.clone();
                wrt.push(input);
                let mut grads = graph.backward(&seeds, &wrt)?;
                let (n, w) = graph.shape(input);
                let input_grad = grads.pop().flatten().unwrap_or_else(|| Tensor2::zeros(n, w));
                let buffer = self.gen.net.grad_buffer(&grads);
                self.gen.update(&buffer, &self.cfg.adam)?;
                Ok(vec![self.reply(
                    &env,
                    Message::GradUp {
                        grad: input_grad,
                        cond_loss,
                    },
                )])
            }
            (Message::ShuffleBarrier { round, .. }, Phase::Shuffle) => {
                if *round != self.round {
                    return Err(self.desync(format!("barrier for round {round} at round {}", self.round)));
                }
                if self.pending.is_some() {
                    return Err(self.desync("barrier reached with a pending step".into()));
                }
                if self.cfg.shuffle {
                    let perm = self.shuffle.permutation(self.data.raw.n_rows());
                    self.data.permute(&perm);
                    self.index = CategoryIndex::new(&self.data.raw);
                    self.shuffle = self.shuffle.advance();
                }
                let ack = self.reply(
                    &env,
                    Message::ShuffleBarrier {
                        round: self.round,
                        shuffle: self.cfg.shuffle,
                    },
                );
                self.round += 1;
                Ok(vec![ack])
            }
            (Message::SynthRequest { n }, Phase::Synth) => {
                let refs: Vec<&Tensor2> = self.synth.iter().collect();
                let all = Tensor2::vcat(&refs)?;
                if all.rows() < *n {
                    return Err(self.desync(format!("asked for {n} rows, generated {}", all.rows())));
                }
                let keep: Vec<usize> = (0..*n).collect();
                let generated = all.gather_rows(&keep);
                self.synth.clear();
                let decoded = self.data.encoder.decode(&generated, (0..*n as u64).collect())?;
                let mut rng = stream(self.cfg.seeds.publication, "publish", 0);
                let perm = fisher_yates(*n, &mut rng);
                let published = decoded.permute(&perm);
                Ok(vec![self.reply(
                    &env,
                    Message::SynthRows {
                        rows: table_to_matrix(&published),
                    },
                )])
            }
            (m, phase) => Err(self.desync(format!("unexpected {} in phase {:?}", m.kind(), phase))),
        }
    }

    fn disc_forward(&mut self, env: &Envelope, piece: &Tensor2) -> Result<Vec<Envelope>, ProtocolError> {
        let contributor = self.contributor.ok_or_else(|| self.desync("no contributor announced".into()))?;
        let mut g = Graph::new();
        let x = g.constant(piece.clone());
        let out = self.gen.net.build(&mut g, x, Mode::Train, &mut self.rngs.dropout, false)?;
        let fake = apply_output_activations(
            &mut g,
            out.output,
            &self.spans,
            self.cfg.temperature,
            Mode::Train,
            &mut self.rngs.gumbel,
        )?;
        let trainable = self.disc.has_params();
        let params = self.disc.net.bind_params(&mut g, trainable);
        let d_fake = self.disc.net.build_with(&mut g, fake, &params, Mode::Train, &mut self.rngs.dropout)?;
        let rows = if contributor == self.id {
            let draw = self.draw.as_ref().ok_or_else(|| self.desync("contributor without a draw".into()))?;
            self.data.encoded.matrix.gather_rows(&draw.idx_batch)
        } else {
            self.data.encoded.matrix.clone()
        };
        let real = g.constant(rows);
        let d_real = self.disc.net.build_with(&mut g, real, &params, Mode::Train, &mut self.rngs.dropout)?;
        let out = vec![
            self.reply(
                env,
                Message::BottomDiscLogits {
                    path: Path::Fake,
                    logits: g.value(d_fake).clone(),
                },
            ),
            self.reply(
                env,
                Message::BottomDiscLogits {
                    path: Path::Real,
                    logits: g.value(d_real).clone(),
                },
            ),
        ];
        if trainable {
            self.pending = Some(Pending::Disc {
                graph: g,
                params,
                fake: d_fake,
                real: d_real,
                grad_fake: None,
                grad_real: None,
            });
        }
        Ok(out)
    }

    fn gen_forward(&mut self, env: &Envelope, piece: &Tensor2) -> Result<Vec<Envelope>, ProtocolError> {
        let contributor = self.contributor.ok_or_else(|| self.desync("no contributor announced".into()))?;
        let mut g = Graph::new();
        let input = g.variable(piece.clone());
        let gen = self.gen.net.build(&mut g, input, Mode::Train, &mut self.rngs.dropout, true)?;
        let fake = apply_output_activations(
            &mut g,
            gen.output,
            &self.spans,
            self.cfg.temperature,
            Mode::Train,
            &mut self.rngs.gumbel,
        )?;
        let ce = if contributor == self.id && self.cfg.conditional_loss {
            let draw = self.draw.as_ref().ok_or_else(|| self.desync("contributor without a draw".into()))?;
            let targets = self.data.ce_targets(&draw.chosen);
            Some(conditional_cross_entropy(&mut g, gen.output, &targets)?)
        } else {
            None
        };
        let params = self.disc.net.bind_params(&mut g, false);
        let d_fake = self.disc.net.build_with(&mut g, fake, &params, Mode::Train, &mut self.rngs.dropout)?;
        let out = vec![self.reply(
            env,
            Message::BottomDiscLogits {
                path: Path::Fake,
                logits: g.value(d_fake).clone(),
            },
        )];
        self.pending = Some(Pending::Gen {
            graph: g,
            params: gen.params,
            input,
            fake: d_fake,
            ce,
        });
        Ok(out)
    }
}
