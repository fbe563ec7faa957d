use proptest::prelude::*;
use vtgan_core::nn::gradcheck::{layer_specs, net_gradient_errors, penalty_gradient_error, random_spec};
use vtgan_core::nn::{BlockSpec, Mode, Net, Tensor2};
use vtgan_core::rng::stream;

use rand::Rng;

fn input(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = stream(seed, "test:input", 0);
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn every_layer_type_alone() {
    for (i, (name, spec)) in layer_specs().into_iter().enumerate() {
        let mut net = Net::new(spec.clone(), &mut stream(i as u64, "test:init", 0)).unwrap();
        let x = input(7, spec.input_dim, i as u64);
        for mode in [Mode::Train, Mode::Eval] {
            let (gx, gp) = net_gradient_errors(&mut net, &x, mode, 9).unwrap();
            assert!(gx <= 1e-4 && gp <= 1e-4, "{name} {mode:?}: input {gx:e}, params {gp:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn composed_nets_match_finite_differences(seed in 0u64..1_000_000, batch in 2usize..=16) {
        let mut rng = stream(seed, "test:spec", 0);
        let spec = random_spec(&mut rng);
        prop_assert!(spec.blocks.len() <= 3);
        let mut net = Net::new(spec.clone(), &mut rng).unwrap();
        prop_assert!(net.output_dim() <= 32);
        let x = input(batch, spec.input_dim, seed);
        let (gx, gp) = net_gradient_errors(&mut net, &x, Mode::Train, seed).unwrap();
        prop_assert!(gx <= 1e-4, "input error {gx:e} for {spec:?}");
        prop_assert!(gp <= 1e-4, "param error {gp:e} for {spec:?}");
    }

    #[test]
    fn penalty_parameter_gradients(seed in 0u64..1_000_000, batch in 2usize..=16) {
        let mut rng = stream(seed, "test:spec", 1);
        let mut spec = random_spec(&mut rng);
        let w = spec.output_dim().unwrap();
        spec.blocks.push(BlockSpec::linear(w, 1));
        let mut net = Net::new(spec.clone(), &mut rng).unwrap();
        let real = input(batch, spec.input_dim, seed);
        let fake = input(batch, spec.input_dim, seed + 1);
        let err = penalty_gradient_error(&mut net, &real, &fake, 10.0, seed).unwrap();
        prop_assert!(err <= 1e-3, "penalty error {err:e} for {spec:?}");
    }
}
