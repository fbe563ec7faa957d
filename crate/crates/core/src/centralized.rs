//! An unsplit conditional GAN over a single table. It draws from the same
//! named random streams as a one-client federation, so the two produce the
//! same losses step for step.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::cond::{draw_at_client, CategoryIndex, CvLayout, RatioVector};
use crate::data::{fisher_yates, RawTable, ShuffleState};
use crate::nn::{
    apply_output_activations, conditional_cross_entropy, penalty_from_input, Graph, Mode, Net, OutputSpan, Residual,
    Tensor2,
};
use crate::protocol::{
    normal_noise, plan_partition, ClientData, PartitionConfig, Phase, ProtocolError, Shard, StepRecord, TrainingConfig,
};
use crate::rng::{stream, StreamRng};

struct Rngs {
    contributor: StreamRng,
    noise: StreamRng,
    gp: StreamRng,
    dropout: StreamRng,
    cv: StreamRng,
    gumbel: StreamRng,
    synth_contributor: StreamRng,
    synth_noise: StreamRng,
    synth_cv: StreamRng,
}

pub struct CentralizedGan {
    pub gen: Shard,
    pub cv_filter: Shard,
    pub disc: Shard,
    pub data: ClientData,
    index: CategoryIndex,
    spans: Vec<OutputSpan>,
    layout: CvLayout,
    ratio: RatioVector,
    cfg: TrainingConfig,
    rngs: Rngs,
    shuffle: ShuffleState,
    round: u64,
    records: Vec<StepRecord>,
}

impl CentralizedGan {
    /// Two residual generator blocks and two critic blocks of `block_dim`.
    pub fn new(table: RawTable, block_dim: usize, residual: Residual, cfg: &TrainingConfig) -> Result<Self, ProtocolError> {
        let data = ClientData::prepare(table, &cfg.gmm, &mut stream(cfg.seeds.clients, "encode", 0))?;
        Self::from_data(data, block_dim, residual, cfg)
    }

    pub fn from_data(data: ClientData, block_dim: usize, residual: Residual, cfg: &TrainingConfig) -> Result<Self, ProtocolError> {
        cfg.validate(data.raw.n_rows())?;
        let layout = CvLayout::new(core::slice::from_ref(&data.raw.schema));
        if layout.width == 0 {
            return Err(crate::cond::ConditioningError::Unavailable.into());
        }
        let ratio = RatioVector(vec![1.0]);
        let partition = PartitionConfig {
            block_dim,
            residual,
            ..PartitionConfig::new(2, 0, 2, 0)
        };
        let specs = plan_partition(&partition, &ratio)?.shard_specs(cfg.noise_dim, layout.width, &[data.encoded.matrix.cols()])?;
        let (s, c) = (cfg.seeds.server, cfg.seeds.clients);
        let top = Net::new(specs.gen_top, &mut stream(s, "init:gen_top", 0))?;
        let bottom = Net::new(specs.gen_bottoms[0].clone(), &mut stream(c, "init:gen_bottom", 0))?;
        let gen = Shard::new(Net::stack(&top, &bottom)?);
        let cv_filter = Shard::new(Net::new(specs.cv_filter, &mut stream(s, "init:cv_filter", 0))?);
        let disc = Shard::new(Net::new(specs.disc_top, &mut stream(s, "init:disc_top", 0))?);
        Ok(Self {
            gen,
            cv_filter,
            disc,
            index: CategoryIndex::new(&data.raw),
            spans: data.encoded.output_spans(),
            data,
            layout,
            ratio,
            cfg: cfg.clone(),
            rngs: Rngs {
                contributor: stream(s, "contributor", 0),
                noise: stream(s, "noise", 0),
                gp: stream(s, "gp", 0),
                dropout: stream(s, "dropout", 0),
                cv: stream(c, "cv", 0),
                gumbel: stream(c, "gumbel", 0),
                synth_contributor: stream(s, "synth:contributor", 0),
                synth_noise: stream(s, "synth:noise", 0),
                synth_cv: stream(c, "synth:cv", 0),
            },
            shuffle: ShuffleState::new(cfg.seeds.shuffle),
            round: 0,
            records: Vec::new(),
        })
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn disc_step(&mut self, k: u32) -> Result<(), ProtocolError> {
        let p = self.layout.sample_contributor(&self.ratio, &mut self.rngs.contributor)?;
        let draw = draw_at_client(&self.index, &self.layout, p, self.cfg.batch, &mut self.rngs.cv)?;
        let n = draw.cv_batch.rows();
        let z = normal_noise(n, self.cfg.noise_dim, &mut self.rngs.noise);

        let mut g = Graph::new();
        let input = g.constant(Tensor2::hcat(&[&z, &draw.cv_batch])?);
        let raw = self.gen.net.build(&mut g, input, Mode::Train, &mut self.rngs.dropout, false)?;
        let fake = apply_output_activations(
            &mut g,
            raw.output,
            &self.spans,
            self.cfg.temperature,
            Mode::Train,
            &mut self.rngs.gumbel,
        )?;
        let real = g.constant(self.data.encoded.matrix.gather_rows(&draw.idx_batch));
        let cv = g.constant(draw.cv_batch.clone());
        let emb = self.cv_filter.net.build(&mut g, cv, Mode::Train, &mut self.rngs.dropout, true)?;
        let fake_in = g.concat_cols(&[fake, emb.output])?;
        let real_in = g.concat_cols(&[real, emb.output])?;
        let params = self.disc.net.bind_params(&mut g, true);
        let d_fake = self.disc.net.build_with(&mut g, fake_in, &params, Mode::Train, &mut self.rngs.dropout)?;
        let d_real = self.disc.net.build_with(&mut g, real_in, &params, Mode::Train, &mut self.rngs.dropout)?;

        let fv = g.value(fake).clone();
        let rv = g.value(real).clone();
        let mut mixed = Tensor2::zeros(n, fv.cols());
        for r in 0..n {
            let e: f64 = self.rngs.gp.random();
            for c in 0..fv.cols() {
                mixed.set(r, c, e * rv.get(r, c) + (1.0 - e) * fv.get(r, c));
            }
        }
        let mixed = g.constant(mixed);
        let x_hat = g.concat_cols(&[mixed, emb.output])?;
        let d_hat = self.disc.net.build_with(&mut g, x_hat, &params, Mode::Train, &mut self.rngs.dropout)?;
        let pen = penalty_from_input(&mut g, x_hat, d_hat, self.cfg.lambda)?;

        let mf = g.mean_all(d_fake);
        let mr = g.mean_all(d_real);
        let critic = g.sub(mf, mr)?;
        let loss = g.add(critic, pen)?;
        let value = g.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(ProtocolError::NonFinite("discriminator loss".into()));
        }
        let mut wrt = params.clone();
        wrt.extend(&emb.params);
        let mut grads = g.backward_scalar(loss, &wrt)?;
        let filter_grads = grads.split_off(params.len());
        let d_buf = self.disc.net.grad_buffer(&grads);
        let f_buf = self.cv_filter.net.grad_buffer(&filter_grads);
        self.disc.update(&d_buf, &self.cfg.adam)?;
        self.cv_filter.update(&f_buf, &self.cfg.adam)?;
        self.records.push(StepRecord {
            round: self.round,
            phase: Phase::Disc(k),
            loss: value,
            wasserstein: -g.value(critic).get(0, 0),
            penalty: g.value(pen).get(0, 0),
            cond: 0.0,
        });
        Ok(())
    }

    fn gen_step(&mut self) -> Result<(), ProtocolError> {
        let p = self.layout.sample_contributor(&self.ratio, &mut self.rngs.contributor)?;
        let draw = draw_at_client(&self.index, &self.layout, p, self.cfg.batch, &mut self.rngs.cv)?;
        let n = draw.cv_batch.rows();
        let z = normal_noise(n, self.cfg.noise_dim, &mut self.rngs.noise);

        let mut g = Graph::new();
        let input = g.constant(Tensor2::hcat(&[&z, &draw.cv_batch])?);
        let raw = self.gen.net.build(&mut g, input, Mode::Train, &mut self.rngs.dropout, true)?;
        let fake = apply_output_activations(
            &mut g,
            raw.output,
            &self.spans,
            self.cfg.temperature,
            Mode::Train,
            &mut self.rngs.gumbel,
        )?;
        let ce = if self.cfg.conditional_loss {
            let targets = self.data.ce_targets(&draw.chosen);
            Some(conditional_cross_entropy(&mut g, raw.output, &targets)?)
        } else {
            None
        };
        let cv = g.constant(draw.cv_batch.clone());
        let emb = self.cv_filter.net.build(&mut g, cv, Mode::Train, &mut self.rngs.dropout, false)?;
        let x = g.concat_cols(&[fake, emb.output])?;
        let d = self.disc.net.build(&mut g, x, Mode::Train, &mut self.rngs.dropout, false)?;
        let m = g.mean_all(d.output);
        let adv = g.scale(m, -1.0);
        let loss = match ce {
            Some(ce) => g.add(adv, ce)?,
            None => adv,
        };
        let value = g.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(ProtocolError::NonFinite("generator loss".into()));
        }
        let grads = g.backward_scalar(loss, &raw.params)?;
        let buf = self.gen.net.grad_buffer(&grads);
        self.gen.update(&buf, &self.cfg.adam)?;
        self.records.push(StepRecord {
            round: self.round,
            phase: Phase::Gen,
            loss: value,
            wasserstein: 0.0,
            penalty: 0.0,
            cond: ce.map_or(0.0, |c| g.value(c).get(0, 0)),
        });
        Ok(())
    }

    pub fn train_round(&mut self) -> Result<(), ProtocolError> {
        for k in 0..self.cfg.disc_epochs {
            self.disc_step(k)?;
        }
        self.gen_step()?;
        if self.cfg.shuffle {
            let perm = self.shuffle.permutation(self.data.raw.n_rows());
            self.data.permute(&perm);
            self.index = CategoryIndex::new(&self.data.raw);
            self.shuffle = self.shuffle.advance();
        }
        self.round += 1;
        Ok(())
    }

    pub fn train(&mut self) -> Result<(), ProtocolError> {
        for _ in 0..self.cfg.rounds {
            self.train_round()?;
        }
        Ok(())
    }

    pub fn synthesize(&mut self, n: usize) -> Result<RawTable, ProtocolError> {
        if n == 0 {
            return Err(ProtocolError::Config("cannot synthesize zero rows".into()));
        }
        let mut parts = Vec::new();
        let batch = self.cfg.batch;
        for b in 0..n.div_ceil(batch) {
            let rows = batch.min(n - b * batch);
            let p = self.layout.sample_contributor(&self.ratio, &mut self.rngs.synth_contributor)?;
            let draw = draw_at_client(&self.index, &self.layout, p, rows, &mut self.rngs.synth_cv)?;
            let z = normal_noise(rows, self.cfg.noise_dim, &mut self.rngs.synth_noise);
            let mut g = Graph::new();
            let input = g.constant(Tensor2::hcat(&[&z, &draw.cv_batch])?);
            let raw = self.gen.net.build(&mut g, input, Mode::Eval, &mut self.rngs.dropout, false)?;
            let out = apply_output_activations(
                &mut g,
                raw.output,
                &self.spans,
                self.cfg.temperature,
                Mode::Eval,
                &mut self.rngs.gumbel,
            )?;
            parts.push(g.value(out).clone());
        }
        let refs: Vec<&Tensor2> = parts.iter().collect();
        let all = Tensor2::vcat(&refs)?;
        let decoded = self.data.encoder.decode(&all, (0..n as u64).collect())?;
        let perm = fisher_yates(n, &mut stream(self.cfg.seeds.publication, "publish", 0));
        let mut published = decoded.permute(&perm);
        published.row_ids = (0..n as u64).collect();
        Ok(published)
    }
}
