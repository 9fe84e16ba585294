//! Central finite differences for parameter and input gradients.

use cgan_anomaly::gan::{
    cgan_loss, generator_adv_loss, l1_loss, l1_loss_grad, Direction, Discriminator, DiscriminatorTopology, Generator,
    GeneratorTopology,
};
use cgan_anomaly::nn::{Grads, Parameterized};
use cgan_anomaly::{NoiseSource, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
/// Round-off level of a central difference with step `H` on O(1) losses.
pub const ABS_FLOOR: f64 = 1e-8;

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, s: usize) -> Tensor64 {
    Tensor64::from_fn(c, s, s, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

pub fn weighted_sum(t: &Tensor64, w: &Tensor64) -> f64 {
    t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Checks a sample of every parameter block; returns the worst relative error.
pub fn check_params<N: Parameterized<f64>>(
    net: &mut N,
    analytic: &Grads<f64>,
    per_block: usize,
    loss: impl Fn(&N) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    for (b, &len) in sizes.iter().enumerate() {
        let step = (len / per_block).max(1);
        for i in (0..len).step_by(step) {
            let orig = net.params()[b][i];
            net.params_mut()[b][i] = orig + H;
            let up = loss(net);
            net.params_mut()[b][i] = orig - H;
            let down = loss(net);
            net.params_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let e = rel_err(analytic.0[b][i], numeric);
            assert!(
                e <= REL_TOL,
                "block {b} index {i}: analytic {} numeric {numeric}",
                analytic.0[b][i]
            );
            worst = worst.max(e);
        }
    }
    worst
}

pub fn check_input(x: &Tensor64, analytic: &Tensor64, loss: impl Fn(&Tensor64) -> f64) {
    for i in (0..x.data().len()).step_by(7) {
        let mut p = x.clone();
        p.data_mut()[i] += H;
        let up = loss(&p);
        p.data_mut()[i] -= 2.0 * H;
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * H);
        let e = rel_err(analytic.data()[i], numeric);
        assert!(
            e <= REL_TOL,
            "input {i}: analytic {} numeric {numeric}",
            analytic.data()[i]
        );
    }
}

pub fn perturbed_discriminator(res: usize, seed: u64) -> Discriminator<f64> {
    let mut d = Discriminator::new(DiscriminatorTopology::for_resolution(res, 2).unwrap(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for block in d.params_mut() {
        for v in block.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    d
}

pub fn generator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let topo = GeneratorTopology::for_resolution(16, 2).unwrap();
    let mut g = Generator::<f64>::new(topo, Direction::FrameToFlow, 5);
    let x = random_tensor(&mut rng, 3, 16);
    let w = random_tensor(&mut rng, 3, 16);
    let noise = NoiseSource::seeded(9);

    let cache = g.forward_train(&x, noise).unwrap();
    let mut grads = g.zero_grads();
    let gx = g.backward(&cache, &w, &mut grads);
    check_params(&mut g, &grads, 12, |n| weighted_sum(&n.forward(&x, noise).unwrap(), &w));
    check_input(&x, &gx, |p| weighted_sum(&g.forward(p, noise).unwrap(), &w));
}

pub fn discriminator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut d = perturbed_discriminator(16, 3);
    let x = random_tensor(&mut rng, 3, 16);
    let y = random_tensor(&mut rng, 3, 16);
    let side = d.topology.grid_side().unwrap();
    let w = random_tensor(&mut rng, 1, side);

    let cache = d.forward_train(&x, &y).unwrap();
    let mut grads = d.zero_grads();
    let gy = d.backward(&cache, &w, &mut grads);
    check_params(&mut d, &grads, 12, |n| weighted_sum(&n.forward(&x, &y).unwrap(), &w));
    check_input(&y, &gy, |p| weighted_sum(&d.forward(&x, p).unwrap(), &w));
}

pub fn discriminator_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut d = perturbed_discriminator(8, 4);
    let x = random_tensor(&mut rng, 3, 8);
    let real = random_tensor(&mut rng, 3, 8);
    let fake = random_tensor(&mut rng, 3, 8);
    let loss = |n: &Discriminator<f64>| {
        cgan_loss(&n.forward(&x, &real).unwrap(), &n.forward(&x, &fake).unwrap())
            .unwrap()
            .loss_d
    };
    let cr = d.forward_train(&x, &real).unwrap();
    let cf = d.forward_train(&x, &fake).unwrap();
    let l = cgan_loss(cr.probabilities(), cf.probabilities()).unwrap();
    let mut grads = d.zero_grads();
    d.backward(&cr, &l.grad_d_real, &mut grads);
    d.backward(&cf, &l.grad_d_fake, &mut grads);
    check_params(&mut d, &grads, 20, loss);
}

pub fn generator_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let topo = GeneratorTopology::for_resolution(8, 2).unwrap();
    let mut g = Generator::<f64>::new(topo, Direction::FlowToFrame, 6);
    let d = perturbed_discriminator(8, 5);
    let x = random_tensor(&mut rng, 3, 8);
    let y = random_tensor(&mut rng, 3, 8);
    let lambda = 100.0;
    let noise = NoiseSource::off();
    let objective = |n: &Generator<f64>| {
        let p = n.forward(&x, noise).unwrap();
        generator_adv_loss(&d.forward(&x, &p).unwrap()).unwrap().0 + lambda * l1_loss(&y, &p).unwrap()
    };

    let gc = g.forward_train(&x, noise).unwrap();
    let dc = d.forward_train(&x, gc.output()).unwrap();
    let (_, adv_grad) = generator_adv_loss(dc.probabilities()).unwrap();
    let mut scratch = d.zero_grads();
    let g_adv = d.backward(&dc, &adv_grad, &mut scratch);
    let g_l1 = l1_loss_grad(&y, gc.output()).unwrap();
    let total = g_adv.zip_map(&g_l1, |a, b| a + lambda * b).unwrap();
    let mut grads = g.zero_grads();
    g.backward(&gc, &total, &mut grads);
    check_params(&mut g, &grads, 20, objective);
}

pub fn losses_have_closed_forms_on_constant_inputs() {
    let half = Tensor64::filled(1, 4, 4, 0.5);
    let l = cgan_loss(&half, &half).unwrap();
    assert!((l.loss_d - 2.0 * std::f64::consts::LN_2).abs() <= 1e-9);
    assert!((l.loss_g_adv - std::f64::consts::LN_2).abs() <= 1e-9);

    let y = Tensor64::filled(3, 4, 4, 0.25);
    let p = Tensor64::filled(3, 4, 4, -0.5);
    assert!((l1_loss(&y, &p).unwrap() - 0.75).abs() <= 1e-12);
    assert_eq!(l1_loss(&y, &y).unwrap(), 0.0);

    // untrained discriminator outputs exactly 0.5
    let d = Discriminator::<f64>::new(DiscriminatorTopology::for_resolution(16, 2).unwrap(), 1);
    let probs = d
        .forward(&Tensor64::filled(3, 16, 16, 0.1), &Tensor64::filled(3, 16, 16, -0.3))
        .unwrap();
    assert!(probs.data().iter().all(|&v| v == 0.5));
}
