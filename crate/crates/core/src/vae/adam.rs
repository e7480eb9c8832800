use serde::{Deserialize, Serialize};

use super::codec::LatentCodec;
use super::objective::CodecGrads;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for every codec parameter. Steps ascend the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: CodecGrads,
    pub second: CodecGrads,
    pub step: u64,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate at each epoch boundary.
    pub decay: f64,
}

impl AdamState {
    pub fn new(codec: &LatentCodec, learning_rate: f64, decay: f64) -> Self {
        Self {
            first: CodecGrads::zeros_like(codec),
            second: CodecGrads::zeros_like(codec),
            step: 0,
            learning_rate,
            decay,
        }
    }

    pub fn end_epoch(&mut self) {
        self.learning_rate *= self.decay;
    }
}

/// One bias-corrected Adam step in the ascent direction of `grads`.
pub fn adam_step(state: &mut AdamState, codec: &mut LatentCodec, grads: &CodecGrads) -> Result<()> {
    let shapes_match = |a: Vec<&[f64]>, b: Vec<&[f64]>| a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len());
    if !shapes_match(codec.tensors(), grads.tensors()) || !shapes_match(state.first.tensors(), grads.tensors()) {
        return Err(Error::shape("gradient layout differs from codec"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let lr = state.learning_rate;
    let params = codec.tensors_mut();
    let firsts = state.first.tensors_mut();
    let seconds = state.second.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(firsts).zip(seconds) {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] += lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
