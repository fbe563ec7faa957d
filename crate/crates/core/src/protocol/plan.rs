use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::cond::RatioVector;
use crate::nn::{BlockSpec, NetSpec, NnError, Residual, Tensor2};

/// Block counts `n1..n4` of a `D^{n3}_{n4} G^{n1}_{n2}` layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub block_dim: usize,
    pub residual: Residual,
    /// Restrict to `n1 + n2 = 2` and `n3 + n4 = 2`.
    pub strict: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            n1: 0,
            n2: 2,
            n3: 2,
            n4: 0,
            block_dim: 256,
            residual: Residual::Concat,
            strict: true,
        }
    }
}

impl PartitionConfig {
    pub fn new(n1: usize, n2: usize, n3: usize, n4: usize) -> Self {
        Self {
            n1,
            n2,
            n3,
            n4,
            ..Self::default()
        }
    }

    /// The nine layouts with two generator and two discriminator blocks.
    pub fn two_block_layouts() -> Vec<PartitionConfig> {
        let mut out = Vec::new();
        for n3 in (0..=2).rev() {
            for n1 in (0..=2).rev() {
                out.push(Self::new(n1, 2 - n1, n3, 2 - n3));
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("D{}_{}G{}_{}", self.n3, self.n4, self.n1, self.n2)
    }
}

/// Splits `total` by `ratio` with `floor` and hands the remainder out one
/// unit at a time to the lowest-indexed clients.
pub fn client_widths(ratio: &RatioVector, total: usize) -> Result<Vec<usize>, ProtocolError> {
    if ratio.is_empty() {
        return Err(ProtocolError::Plan("empty ratio vector".into()));
    }
    let mut w: Vec<usize> = ratio
        .0
        .iter()
        .map(|&p| crate::math::floor(p * total as f64 + 1e-9) as usize)
        .collect();
    let assigned: usize = w.iter().sum();
    if assigned > total {
        return Err(ProtocolError::Plan("ratio vector sums above one".into()));
    }
    let n = w.len();
    for i in 0..(total - assigned) {
        w[i % n] += 1;
    }
    if let Some(i) = w.iter().position(|&x| x == 0) {
        return Err(ProtocolError::Plan(format!(
            "client {i} gets zero width out of {total}; increase block_dim"
        )));
    }
    Ok(w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub config: PartitionConfig,
    pub ratio: RatioVector,
    /// Per-client block widths at each bottom level.
    pub widths: Vec<usize>,
}

pub fn plan_partition(config: &PartitionConfig, ratio: &RatioVector) -> Result<PartitionPlan, ProtocolError> {
    if config.strict && (config.n1 + config.n2 != 2 || config.n3 + config.n4 != 2) {
        let allowed: Vec<String> = PartitionConfig::two_block_layouts().iter().map(|c| c.label()).collect();
        return Err(ProtocolError::Plan(format!(
            "{} is not one of the nine strict layouts: {}",
            config.label(),
            allowed.join(", ")
        )));
    }
    if config.block_dim == 0 {
        return Err(ProtocolError::Plan("block_dim must be positive".into()));
    }
    let widths = client_widths(ratio, config.block_dim)?;
    Ok(PartitionPlan {
        config: *config,
        ratio: ratio.clone(),
        widths,
    })
}

/// The network specs of every shard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardSpecs {
    pub gen_top: NetSpec,
    /// Widths of the generator pieces sent to each client.
    pub gen_split: Vec<usize>,
    /// Whether every client receives the whole generator input.
    pub gen_broadcast: bool,
    pub gen_bottoms: Vec<NetSpec>,
    pub disc_bottoms: Vec<NetSpec>,
    pub cv_filter: NetSpec,
    pub disc_top: NetSpec,
}

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DROPOUT: f64 = 0.5;

fn nn(e: NnError) -> ProtocolError {
    ProtocolError::Nn(e)
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.widths.len()
    }

    /// Layer dimensions for noise width `noise_dim`, conditional-vector
    /// width `cv_width` and the clients' encoded widths.
    pub fn shard_specs(&self, noise_dim: usize, cv_width: usize, encoded: &[usize]) -> Result<ShardSpecs, ProtocolError> {
        if encoded.len() != self.n_clients() {
            return Err(ProtocolError::Plan(format!(
                "{} encoded widths for {} clients",
                encoded.len(),
                self.n_clients()
            )));
        }
        let c = &self.config;
        let input = noise_dim + cv_width;
        let mut gen_top = NetSpec::identity(input);
        let mut w = input;
        for _ in 0..c.n1 {
            gen_top.blocks.push(BlockSpec::rn(w, c.block_dim, c.residual));
            w = gen_top.output_dim().map_err(nn)?;
        }
        let gen_broadcast = c.n1 == 0;
        let gen_split = if gen_broadcast {
            alloc::vec![w; self.n_clients()]
        } else {
            client_widths(&self.ratio, w)?
        };
        let mut gen_bottoms = Vec::new();
        let mut disc_bottoms = Vec::new();
        let mut disc_widths = Vec::new();
        for (i, (&piece, &enc)) in gen_split.iter().zip(encoded).enumerate() {
            let mut g = NetSpec::identity(piece);
            let mut gw = piece;
            for _ in 0..c.n2 {
                g.blocks.push(BlockSpec::rn(gw, self.widths[i], c.residual));
                gw = g.output_dim().map_err(nn)?;
            }
            g.blocks.push(BlockSpec::linear(gw, enc));
            gen_bottoms.push(g);

            let mut d = NetSpec::identity(enc);
            let mut dw = enc;
            for _ in 0..c.n4 {
                d.blocks.push(BlockSpec::fn_block(dw, self.widths[i], LEAKY_SLOPE, DROPOUT));
                dw = self.widths[i];
            }
            disc_bottoms.push(d);
            disc_widths.push(dw);
        }
        let mut disc_top = NetSpec::identity(disc_widths.iter().sum::<usize>() + cv_width);
        let mut dw = disc_top.input_dim;
        for _ in 0..c.n3 {
            disc_top.blocks.push(BlockSpec::fn_block(dw, c.block_dim, LEAKY_SLOPE, DROPOUT));
            dw = c.block_dim;
        }
        disc_top.blocks.push(BlockSpec::linear(dw, 1));
        let specs = ShardSpecs {
            gen_top,
            gen_split,
            gen_broadcast,
            gen_bottoms,
            disc_bottoms,
            cv_filter: crate::cond::cv_filter_spec(cv_width.max(1)),
            disc_top,
        };
        for s in specs.all() {
            s.output_dim().map_err(nn)?;
        }
        Ok(specs)
    }
}

impl ShardSpecs {
    fn all(&self) -> Vec<&NetSpec> {
        let mut v = alloc::vec![&self.gen_top, &self.cv_filter, &self.disc_top];
        v.extend(self.gen_bottoms.iter());
        v.extend(self.disc_bottoms.iter());
        v
    }
}

/// Contiguous column pieces in client order.
pub fn split_logits(t: &Tensor2, widths: &[usize]) -> Result<Vec<Tensor2>, ProtocolError> {
    let total: usize = widths.iter().sum();
    if total != t.cols() {
        return Err(ProtocolError::Shape(format!("width {} split into {}", t.cols(), total)));
    }
    let mut start = 0;
    Ok(widths
        .iter()
        .map(|&w| {
            let piece = t.slice_cols(start, w);
            start += w;
            piece
        })
        .collect())
}

/// `[piece_1 | ... | piece_N | cv_embedding]`.
pub fn concat_logits(pieces: &[Tensor2], cv_embedding: &Tensor2) -> Result<Tensor2, ProtocolError> {
    if pieces.is_empty() {
        return Err(ProtocolError::Shape("no client pieces".into()));
    }
    let mut parts: Vec<&Tensor2> = pieces.iter().collect();
    parts.push(cv_embedding);
    Tensor2::hcat(&parts).map_err(|e| ProtocolError::Shape(format!("{e}")))
}
