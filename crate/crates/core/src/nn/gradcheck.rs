//! Central finite-difference checks used by the test suites and `selftest`.
//!
//! Errors are reported as `max|a - n| / max(max|a|, max|n|)` over the whole
//! gradient vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gradient_penalty, BlockSpec, LayerSpec, Mode, Net, NetSpec, NnError, Residual, Tensor2};
use crate::rng::{stream, StreamRng};

pub const FD_EPS: f64 = 1e-5;

pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Errors of a net's input and parameter gradients for the loss
/// `sum(out * P)` with a fixed random projection `P`. Dropout masks are
/// replayed from `seed` on every evaluation.
pub fn net_gradient_errors(net: &mut Net, x: &Tensor2, mode: Mode, seed: u64) -> Result<(f64, f64), NnError> {
    let fresh = || -> StreamRng { stream(seed, "gradcheck:dropout", 0) };
    let (out, mut tape) = net.forward(x, mode, &mut fresh())?;
    let mut prng = stream(seed, "gradcheck:projection", 0);
    let proj = Tensor2::from_vec(
        out.rows(),
        out.cols(),
        (0..out.rows() * out.cols()).map(|_| prng.random_range(-1.0..1.0)).collect(),
    )?;
    let (pgrad, xgrad) = tape.backward(net, &proj)?;
    let loss = |net: &mut Net, input: &Tensor2| -> f64 {
        let (y, _) = net.forward(input, mode, &mut fresh()).expect("forward succeeded once");
        y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };

    let numeric_x = central_difference(
        |v| {
            let input = Tensor2::from_vec(x.rows(), x.cols(), v.to_vec()).expect("same shape");
            loss(net, &input)
        },
        x.data(),
        FD_EPS,
    );
    let base = net.params().data.clone();
    let numeric_p = central_difference(
        |v| {
            net.params_mut().copy_from_slice(v);
            loss(net, x)
        },
        &base,
        FD_EPS,
    );
    net.params_mut().copy_from_slice(&base);
    Ok((
        relative_error(xgrad.data(), &numeric_x),
        relative_error(&pgrad.data, &numeric_p),
    ))
}

/// Error of the gradient-penalty parameter gradient against finite
/// differences of the penalty value.
pub fn penalty_gradient_error(net: &mut Net, real: &Tensor2, fake: &Tensor2, lambda: f64, seed: u64) -> Result<f64, NnError> {
    let fresh = || stream(seed, "gradcheck:penalty", 0);
    let (_, grads) = gradient_penalty(net, real, fake, lambda, Mode::Train, &mut fresh())?;
    let base = net.params().data.clone();
    let numeric = central_difference(
        |v| {
            net.params_mut().copy_from_slice(v);
            gradient_penalty(net, real, fake, lambda, Mode::Train, &mut fresh())
                .expect("penalty succeeded once")
                .0
        },
        &base,
        FD_EPS,
    );
    net.params_mut().copy_from_slice(&base);
    Ok(relative_error(&grads.data, &numeric))
}

/// A random composed net of one to three blocks, widths at most 32.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R) -> NetSpec {
    let input_dim = rng.random_range(1..=8);
    let mut w = input_dim;
    let blocks = (0..rng.random_range(1..=3))
        .map(|_| {
            let out = rng.random_range(1..=12);
            let block = match rng.random_range(0..6) {
                0 => BlockSpec::rn(w, out, Residual::None),
                1 if w + out <= 32 => BlockSpec::rn(w, out, Residual::Concat),
                1 => BlockSpec::rn(w, out, Residual::None),
                2 => BlockSpec::rn(w, w, Residual::Add),
                3 => BlockSpec::fn_block(w, out, 0.2, 0.5),
                4 => BlockSpec {
                    layers: vec![LayerSpec::Dense { input: w, output: out }, LayerSpec::Tanh],
                    residual: Residual::None,
                },
                _ => BlockSpec::linear(w, out),
            };
            w = block.output_dim(w).expect("widths chain");
            block
        })
        .collect();
    NetSpec { input_dim, blocks }
}

/// One net per layer type, in isolation.
pub fn layer_specs() -> Vec<(&'static str, NetSpec)> {
    let single = |layers: Vec<LayerSpec>| NetSpec {
        input_dim: 5,
        blocks: vec![BlockSpec {
            layers,
            residual: Residual::None,
        }],
    };
    let dense = LayerSpec::Dense { input: 5, output: 5 };
    vec![
        ("dense", single(vec![dense.clone()])),
        ("batchnorm", single(vec![dense.clone(), LayerSpec::BatchNorm { dim: 5 }])),
        ("relu", single(vec![dense.clone(), LayerSpec::Relu])),
        ("leaky_relu", single(vec![dense.clone(), LayerSpec::LeakyRelu { slope: 0.2 }])),
        ("dropout", single(vec![dense.clone(), LayerSpec::Dropout { rate: 0.5 }])),
        ("tanh", single(vec![dense, LayerSpec::Tanh])),
        ("rn_concat", NetSpec { input_dim: 5, blocks: vec![BlockSpec::rn(5, 4, Residual::Concat)] }),
        ("rn_add", NetSpec { input_dim: 5, blocks: vec![BlockSpec::rn(5, 5, Residual::Add)] }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub name: String,
    pub input_error: f64,
    pub param_error: f64,
    pub penalty_error: f64,
}

/// Every layer type alone, then `random` composed nets. Each case checks
/// input and parameter gradients in train mode, and the penalty's
/// parameter gradient through the same net capped with a small critic head.
pub fn suite(seed: u64, random: usize) -> Result<Vec<SuiteCase>, NnError> {
    let mut rng = stream(seed, "gradcheck:suite", 0);
    let mut specs: Vec<(String, NetSpec)> = layer_specs().into_iter().map(|(n, s)| (n.into(), s)).collect();
    for i in 0..random {
        specs.push((format!("random{i}"), random_spec(&mut rng)));
    }
    let mut out = Vec::new();
    for (i, (name, spec)) in specs.into_iter().enumerate() {
        let batch = rng.random_range(2..=16);
        let x = Tensor2::from_vec(
            batch,
            spec.input_dim,
            (0..batch * spec.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )?;
        let mut net = Net::new(spec.clone(), &mut rng)?;
        let (input_error, param_error) = net_gradient_errors(&mut net, &x, Mode::Train, seed + i as u64)?;
        let mut critic_spec = spec;
        let w = critic_spec.output_dim()?;
        // Summed over the batch, a batchnorm output is constant, so a
        // linear head alone would leave the penalty's input gradient at 0.
        critic_spec.blocks.push(BlockSpec {
            layers: vec![LayerSpec::Dense { input: w, output: 4 }, LayerSpec::Tanh],
            residual: Residual::None,
        });
        critic_spec.blocks.push(BlockSpec::linear(4, 1));
        let mut critic = Net::new(critic_spec, &mut rng)?;
        let fake = x.map(|v| 0.5 * v + 0.3);
        let penalty_error = penalty_gradient_error(&mut critic, &x, &fake, 10.0, seed + i as u64)?;
        out.push(SuiteCase {
            name,
            input_error,
            param_error,
            penalty_error,
        });
    }
    Ok(out)
}
