use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, Net, NnError, NodeId, Tensor2, Mode, GradBuffer};

/// Builds `lambda * mean_rows((|grad_x sum(output)|_2 - 1)^2)` as a node
/// that can itself be differentiated.
///
/// `input` must be an ancestor of `output`; each output row is assumed to
/// depend only on the matching input row, as for any row-wise critic.
pub fn penalty_from_input(g: &mut Graph, input: NodeId, output: NodeId, lambda: f64) -> Result<NodeId, NnError> {
    let (r, c) = g.shape(output);
    let ones = g.constant(Tensor2::filled(r, c, 1.0));
    let grad = g.grad_nodes(&[(output, ones)], &[input])?[0];
    let (n, d) = g.shape(input);
    let grad = match grad {
        Some(id) => id,
        None => g.constant(Tensor2::zeros(n, d)),
    };
    let sq = g.square(grad);
    let norm2 = g.row_sum(sq);
    // Keeps the square root differentiable when a row gradient vanishes.
    let norm2 = g.add_scalar(norm2, 1e-12);
    let norm = g.sqrt(norm2);
    let gap = g.add_scalar(norm, -1.0);
    let gap2 = g.square(gap);
    let mean = g.mean_all(gap2);
    let pen = g.scale(mean, lambda);
    if !g.value(pen).is_finite() {
        return Err(NnError::NonFinite("gradient penalty"));
    }
    Ok(pen)
}

/// WGAN-GP penalty of a single critic network on `real`/`fake`, with a
/// fresh `U(0,1)` interpolation weight per row. Returns the penalty and its
/// gradient with respect to the critic's parameters.
pub fn gradient_penalty<R: Rng + ?Sized>(
    net: &mut Net,
    real: &Tensor2,
    fake: &Tensor2,
    lambda: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, GradBuffer), NnError> {
    if real.shape() != fake.shape() {
        return Err(NnError::shape("gradient_penalty", "real and fake differ in shape".into()));
    }
    let (n, d) = real.shape();
    let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut mixed = Tensor2::zeros(n, d);
    for r in 0..n {
        let e = eps[r];
        for ((o, a), b) in mixed.row_mut(r).iter_mut().zip(real.row(r)).zip(fake.row(r)) {
            *o = e * a + (1.0 - e) * b;
        }
    }
    let mut g = Graph::new();
    let x = g.variable(mixed);
    let built = net.build(&mut g, x, mode, rng, true)?;
    let pen = penalty_from_input(&mut g, x, built.output, lambda)?;
    let value = g.value(pen).get(0, 0);
    let grads = g.backward_scalar(pen, &built.params)?;
    let buffer = net.grad_buffer(&grads);
    if !buffer.is_finite() {
        return Err(NnError::NonFinite("gradient penalty gradient"));
    }
    Ok((value, buffer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BlockSpec, NetSpec};
    use crate::rng::stream;
    use alloc::vec;

    fn linear_critic(w: &[f64]) -> Net {
        let spec = NetSpec {
            input_dim: w.len(),
            blocks: vec![BlockSpec::linear(w.len(), 1)],
        };
        let mut net = Net::new(spec, &mut stream(0, "t", 0)).unwrap();
        let p = net.params_mut();
        p[..w.len()].copy_from_slice(w);
        p[w.len()] = 0.3;
        net
    }

    fn batch(seed: u64, n: usize, d: usize) -> Tensor2 {
        let mut rng = stream(seed, "batch", 0);
        Tensor2::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn unit_gradient_critic_has_zero_penalty() {
        let s = 1.0 / 3f64.sqrt();
        let mut net = linear_critic(&[s, s, s]);
        let (p, grads) =
            gradient_penalty(&mut net, &batch(1, 8, 3), &batch(2, 8, 3), 10.0, Mode::Train, &mut stream(3, "e", 0)).unwrap();
        assert!(p.abs() < 1e-12, "{p}");
        assert!(grads.data.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn doubled_first_coordinate_gives_lambda() {
        let mut net = linear_critic(&[2.0, 0.0, 0.0, 0.0]);
        let (p, _) =
            gradient_penalty(&mut net, &batch(1, 6, 4), &batch(2, 6, 4), 10.0, Mode::Train, &mut stream(3, "e", 0)).unwrap();
        assert!((p - 10.0).abs() < 1e-9, "{p}");
    }
}
