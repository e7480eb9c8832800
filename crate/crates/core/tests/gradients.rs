mod common;

use common::*;
use streamdp::vae::{elbo_vae, grad_elbo_vae, reconstruction_grad, CodecConfig, CodecGrads};
use streamdp::{DpmmModel, LatentCodec, Matrix, Responsibilities};

fn flat_grads(g: &CodecGrads) -> Vec<f64> {
    let mut t = g.encoder.tensors();
    t.extend(g.decoder.tensors());
    t.concat()
}

fn nudge(codec: &mut LatentCodec, mut idx: usize, delta: f64) {
    let mut all = codec.encoder.tensors_mut();
    all.extend(codec.decoder.tensors_mut());
    for t in all {
        if idx < t.len() {
            t[idx] += delta;
            return;
        }
        idx -= t.len();
    }
    panic!("parameter index out of range");
}

struct Instance {
    codec: LatentCodec,
    x: Matrix,
    gamma: Responsibilities,
    model: DpmmModel,
    eps: Vec<Matrix>,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let cfg = CodecConfig {
        hidden: vec![3],
        ..CodecConfig::default()
    };
    let codec = LatentCodec::new(3, 2, &cfg, &mut r).unwrap();
    let x = normal_matrix(4, 3, 1.0, &mut r);
    let gamma = random_gamma(4, 2, &mut r);
    let z = normal_matrix(12, 2, 1.0, &mut r);
    let model = fitted_model(&z, &random_gamma(12, 2, &mut r), seed.is_multiple_of(2));
    let eps = vec![normal_matrix(4, 2, 1.0, &mut r)];
    Instance {
        codec,
        x,
        gamma,
        model,
        eps,
    }
}

/// Largest `|analytic − fd| / max(|analytic|, |fd|, 1e-6)` over all parameters.
fn max_relative_error(inst: &mut Instance) -> f64 {
    let (_, grads) = grad_elbo_vae(&inst.codec, &inst.x, &inst.gamma, &inst.model, &inst.eps).unwrap();
    let analytic = flat_grads(&grads);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (p, &a) in analytic.iter().enumerate() {
        nudge(&mut inst.codec, p, h);
        let up = elbo_vae(&inst.codec, &inst.x, &inst.gamma, &inst.model, &inst.eps).unwrap();
        nudge(&mut inst.codec, p, -2.0 * h);
        let down = elbo_vae(&inst.codec, &inst.x, &inst.gamma, &inst.model, &inst.eps).unwrap();
        nudge(&mut inst.codec, p, h);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    worst
}

#[test]
fn objective_gradient_matches_central_differences() {
    for seed in 0..20 {
        let mut inst = instance(seed);
        let err = max_relative_error(&mut inst);
        assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn gradient_value_equals_objective() {
    let inst = instance(3);
    let (value, _) = grad_elbo_vae(&inst.codec, &inst.x, &inst.gamma, &inst.model, &inst.eps).unwrap();
    let plain = elbo_vae(&inst.codec, &inst.x, &inst.gamma, &inst.model, &inst.eps).unwrap();
    assert_eq!(value, plain);
}

#[test]
fn warm_start_gradient_matches_central_differences() {
    let mut inst = instance(11);
    let (_, grads) = reconstruction_grad(&inst.codec, &inst.x).unwrap();
    let analytic = flat_grads(&grads);
    let h = 1e-5;
    for (p, &a) in analytic.iter().enumerate() {
        nudge(&mut inst.codec, p, h);
        let up = reconstruction_grad(&inst.codec, &inst.x).unwrap().0;
        nudge(&mut inst.codec, p, -2.0 * h);
        let down = reconstruction_grad(&inst.codec, &inst.x).unwrap().0;
        nudge(&mut inst.codec, p, h);
        let fd = (up - down) / (2.0 * h);
        assert!((a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1e-6), "param {p}: {a} vs {fd}");
    }
}
