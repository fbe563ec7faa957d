use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Mode, NnError, NodeId, Tensor2};
use crate::math;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    BatchNorm { dim: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Dropout { rate: f64 },
    Tanh,
}

/// How a block's output is combined with its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    None,
    /// `[f(x) | x]`; the width grows by the input width.
    Concat,
    /// `f(x) + x` when the widths agree, plain `f(x)` otherwise.
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub layers: Vec<LayerSpec>,
    pub residual: Residual,
}

impl BlockSpec {
    /// Generator block: dense, batchnorm, relu.
    pub fn rn(input: usize, output: usize, residual: Residual) -> Self {
        Self {
            layers: vec![
                LayerSpec::Dense { input, output },
                LayerSpec::BatchNorm { dim: output },
                LayerSpec::Relu,
            ],
            residual,
        }
    }

    /// Discriminator block: dense, leaky relu, dropout.
    pub fn fn_block(input: usize, output: usize, slope: f64, dropout: f64) -> Self {
        Self {
            layers: vec![
                LayerSpec::Dense { input, output },
                LayerSpec::LeakyRelu { slope },
                LayerSpec::Dropout { rate: dropout },
            ],
            residual: Residual::None,
        }
    }

    pub fn linear(input: usize, output: usize) -> Self {
        Self {
            layers: vec![LayerSpec::Dense { input, output }],
            residual: Residual::None,
        }
    }

    pub(crate) fn output_dim(&self, input: usize) -> Result<usize, NnError> {
        let mut w = input;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Dense { input, output } => {
                    if input != w {
                        return Err(NnError::InvalidSpec(format!("dense expects {input} inputs, got {w}")));
                    }
                    if output == 0 {
                        return Err(NnError::InvalidSpec("dense with zero outputs".into()));
                    }
                    w = output;
                }
                LayerSpec::BatchNorm { dim } => {
                    if dim != w {
                        return Err(NnError::InvalidSpec(format!("batchnorm over {dim}, got {w}")));
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NnError::InvalidSpec(format!("dropout rate {rate} outside [0, 1)")));
                    }
                }
                LayerSpec::LeakyRelu { slope } => {
                    if !slope.is_finite() {
                        return Err(NnError::InvalidSpec("leaky relu slope".into()));
                    }
                }
                LayerSpec::Relu | LayerSpec::Tanh => {}
            }
        }
        Ok(match self.residual {
            Residual::Concat => w + input,
            Residual::None | Residual::Add => w,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub blocks: Vec<BlockSpec>,
}

impl NetSpec {
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            blocks: Vec::new(),
        }
    }

    pub fn output_dim(&self) -> Result<usize, NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("zero input width".into()));
        }
        self.blocks.iter().try_fold(self.input_dim, |w, b| b.output_dim(w))
    }
}

/// Location of one parameter matrix inside [`Params::data`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamView {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamView {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub data: Vec<f64>,
    pub views: Vec<ParamView>,
}

impl Params {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, view: usize) -> Tensor2 {
        let v = self.views[view];
        Tensor2::from_vec(v.rows, v.cols, self.data[v.offset..v.offset + v.len()].to_vec())
            .expect("view fits")
    }
}

/// Gradient with the layout of a [`Params`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    pub data: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Running statistics of one batchnorm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Handle returned by [`Net::build`].
#[derive(Clone, Debug)]
pub struct Built {
    pub output: NodeId,
    pub params: Vec<NodeId>,
}

/// Network parameters plus their spec.
///
/// `generation` counts optimizer updates; a [`Tape`] remembers the value it
/// was recorded at and refuses to backpropagate once it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net {
    spec: NetSpec,
    params: Params,
    bn: Vec<BatchNormStats>,
    generation: u64,
}

impl Net {
    /// Initializes dense layers with `U(-1/sqrt(in), 1/sqrt(in))` and
    /// batchnorm with unit scale and zero shift.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.output_dim()?;
        let mut data = Vec::new();
        let mut views = Vec::new();
        let mut bn = Vec::new();
        let mut push = |data: &mut Vec<f64>, rows: usize, cols: usize, fill: &mut dyn FnMut() -> f64| {
            views.push(ParamView {
                offset: data.len(),
                rows,
                cols,
            });
            for _ in 0..rows * cols {
                data.push(fill());
            }
        };
        for block in &spec.blocks {
            for layer in &block.layers {
                match *layer {
                    LayerSpec::Dense { input, output } => {
                        let k = 1.0 / math::sqrt(input as f64);
                        push(&mut data, input, output, &mut || rng.random_range(-k..k));
                        push(&mut data, 1, output, &mut || rng.random_range(-k..k));
                    }
                    LayerSpec::BatchNorm { dim } => {
                        push(&mut data, 1, dim, &mut || 1.0);
                        push(&mut data, 1, dim, &mut || 0.0);
                        bn.push(BatchNormStats {
                            mean: vec![0.0; dim],
                            var: vec![1.0; dim],
                        });
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            spec,
            params: Params { data, views },
            bn,
            generation: 0,
        })
    }

    /// Reassembles a network from stored parts, checking that they fit.
    pub fn from_parts(spec: NetSpec, data: Vec<f64>, bn: Vec<BatchNormStats>, generation: u64) -> Result<Self, NnError> {
        let mut template = Self::new(spec, &mut crate::rng::stream(0, "template", 0))?;
        if template.params.data.len() != data.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} parameters stored, spec needs {}",
                data.len(),
                template.params.data.len()
            )));
        }
        if template.bn.len() != bn.len()
            || template
                .bn
                .iter()
                .zip(&bn)
                .any(|(a, b)| a.mean.len() != b.mean.len() || a.var.len() != b.var.len())
        {
            return Err(NnError::InvalidSpec("batchnorm statistics do not match spec".into()));
        }
        template.params.data = data;
        template.bn = bn;
        template.generation = generation;
        Ok(template)
    }

    /// `b` applied after `a`, as one network.
    pub fn stack(a: &Net, b: &Net) -> Result<Net, NnError> {
        if a.output_dim() != b.input_dim() {
            return Err(NnError::InvalidSpec(format!(
                "cannot stack width {} onto width {}",
                b.input_dim(),
                a.output_dim()
            )));
        }
        let mut spec = a.spec.clone();
        spec.blocks.extend(b.spec.blocks.iter().cloned());
        let mut data = a.params.data.clone();
        data.extend_from_slice(&b.params.data);
        let mut bn = a.bn.clone();
        bn.extend(b.bn.iter().cloned());
        Net::from_parts(spec, data, bn, 0)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn bn_stats(&self) -> &[BatchNormStats] {
        &self.bn
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim().expect("validated at construction")
    }

    pub fn num_params(&self) -> usize {
        self.params.data.len()
    }

    /// Overwrites parameters in place (finite-difference probes, loading);
    /// bumps the generation so outstanding tapes become stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params.data
    }

    pub(super) fn params_for_update(&mut self) -> &mut Params {
        self.generation += 1;
        &mut self.params
    }

    /// Adds one leaf per parameter matrix, in view order.
    pub fn bind_params(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        (0..self.params.views.len())
            .map(|i| g.leaf(self.params.tensor(i), trainable))
            .collect()
    }

    /// Builds the forward pass on `x` using leaves from [`Net::bind_params`].
    /// Train mode updates batchnorm running statistics.
    pub fn build_with<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph,
        x: NodeId,
        params: &[NodeId],
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId, NnError> {
        if g.shape(x).1 != self.spec.input_dim {
            return Err(NnError::shape(
                "forward",
                format!("input width {} for a net of width {}", g.shape(x).1, self.spec.input_dim),
            ));
        }
        let n = g.shape(x).0;
        let mut view = 0;
        let mut bn_index = 0;
        let mut h = x;
        for block in &self.spec.blocks {
            let block_in = h;
            for layer in &block.layers {
                h = match *layer {
                    LayerSpec::Dense { .. } => {
                        let xw = g.matmul(h, params[view])?;
                        let y = g.add_bias(xw, params[view + 1])?;
                        view += 2;
                        y
                    }
                    LayerSpec::BatchNorm { dim } => {
                        let (gamma, beta) = (params[view], params[view + 1]);
                        view += 2;
                        let stats = &mut self.bn[bn_index];
                        bn_index += 1;
                        let normed = match mode {
                            Mode::Train => batch_norm_train(g, h, stats)?,
                            Mode::Eval => {
                                let shift = Tensor2::from_vec(1, dim, stats.mean.iter().map(|m| -m).collect())?;
                                let inv = Tensor2::from_vec(
                                    1,
                                    dim,
                                    stats.var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect(),
                                )?;
                                let shift = g.constant(shift);
                                let centred = g.add_bias(h, shift)?;
                                let inv = g.constant(inv);
                                let inv = g.broadcast_rows(inv, n)?;
                                g.mul(centred, inv)?
                            }
                        };
                        let gamma = g.broadcast_rows(gamma, n)?;
                        let scaled = g.mul(normed, gamma)?;
                        g.add_bias(scaled, beta)?
                    }
                    LayerSpec::Relu => g.relu(h),
                    LayerSpec::LeakyRelu { slope } => g.leaky_relu(h, slope),
                    LayerSpec::Tanh => g.tanh(h),
                    LayerSpec::Dropout { rate } => {
                        if mode == Mode::Eval || rate == 0.0 {
                            h
                        } else {
                            let (rows, cols) = g.shape(h);
                            let keep = 1.0 - rate;
                            let mask: Vec<f64> = (0..rows * cols)
                                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                .collect();
                            let mask = g.constant(Tensor2::from_vec(rows, cols, mask)?);
                            g.mul(h, mask)?
                        }
                    }
                };
            }
            h = match block.residual {
                Residual::None => h,
                Residual::Concat => g.concat_cols(&[h, block_in])?,
                Residual::Add => {
                    if g.shape(h) == g.shape(block_in) {
                        g.add(h, block_in)?
                    } else {
                        h
                    }
                }
            };
        }
        if !g.value(h).is_finite() {
            return Err(NnError::NonFinite("forward"));
        }
        Ok(h)
    }

    pub fn build<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph,
        x: NodeId,
        mode: Mode,
        rng: &mut R,
        trainable: bool,
    ) -> Result<Built, NnError> {
        let params = self.bind_params(g, trainable);
        let output = self.build_with(g, x, &params, mode, rng)?;
        Ok(Built { output, params })
    }

    /// Collects per-view gradients into a flat buffer; missing entries are
    /// zero.
    pub fn grad_buffer(&self, grads: &[Option<Tensor2>]) -> GradBuffer {
        let mut out = GradBuffer::zeros(self.params.data.len());
        for (view, grad) in self.params.views.iter().zip(grads) {
            if let Some(t) = grad {
                out.data[view.offset..view.offset + view.len()].copy_from_slice(t.data());
            }
        }
        out
    }

    /// Standalone forward pass returning a tape for [`Tape::backward`].
    pub fn forward<R: Rng + ?Sized>(&mut self, input: &Tensor2, mode: Mode, rng: &mut R) -> Result<(Tensor2, Tape), NnError> {
        let mut graph = Graph::new();
        let x = graph.variable(input.clone());
        let built = self.build(&mut graph, x, mode, rng, true)?;
        let out = graph.value(built.output).clone();
        Ok((
            out,
            Tape {
                graph,
                input: x,
                output: built.output,
                params: built.params,
                generation: self.generation,
            },
        ))
    }
}

fn batch_norm_train(g: &mut Graph, x: NodeId, stats: &mut BatchNormStats) -> Result<NodeId, NnError> {
    let (n, d) = g.shape(x);
    if n < 2 {
        return Err(NnError::shape("batchnorm", "train mode needs at least two rows".into()));
    }
    let sum = g.sum_rows(x);
    let mean = g.scale(sum, 1.0 / n as f64);
    let mean_b = g.broadcast_rows(mean, n)?;
    let centred = g.sub(x, mean_b)?;
    let sq = g.square(centred);
    let sq_sum = g.sum_rows(sq);
    let var = g.scale(sq_sum, 1.0 / n as f64);
    let var_eps = g.add_scalar(var, BN_EPS);
    let std = g.sqrt(var_eps);
    let inv = g.recip(std);
    let inv_b = g.broadcast_rows(inv, n)?;
    let out = g.mul(centred, inv_b)?;

    let unbias = n as f64 / (n as f64 - 1.0);
    for j in 0..d {
        let m = g.value(mean).get(0, j);
        let v = g.value(var).get(0, j) * unbias;
        stats.mean[j] = (1.0 - BN_MOMENTUM) * stats.mean[j] + BN_MOMENTUM * m;
        stats.var[j] = (1.0 - BN_MOMENTUM) * stats.var[j] + BN_MOMENTUM * v;
    }
    Ok(out)
}

/// Recorded forward pass of a single network.
pub struct Tape {
    graph: Graph,
    input: NodeId,
    output: NodeId,
    params: Vec<NodeId>,
    generation: u64,
}

impl Tape {
    /// Gradients of `<output, output_grad>` with respect to the parameters
    /// and the input.
    pub fn backward(&mut self, net: &Net, output_grad: &Tensor2) -> Result<(GradBuffer, Tensor2), NnError> {
        if net.generation != self.generation {
            return Err(NnError::StaleTape {
                recorded: self.generation,
                current: net.generation,
            });
        }
        let mut wrt = self.params.clone();
        wrt.push(self.input);
        let mut grads = self.graph.backward(&[(self.output, output_grad.clone())], &wrt)?;
        let (rows, cols) = self.graph.shape(self.input);
        let input_grad = grads.pop().flatten().unwrap_or_else(|| Tensor2::zeros(rows, cols));
        let buffer = net.grad_buffer(&grads);
        if !buffer.is_finite() || !input_grad.is_finite() {
            return Err(NnError::NonFinite("backward"));
        }
        Ok((buffer, input_grad))
    }
}
