//! Adam with global-norm gradient clipping.

use crate::nn::ParameterSet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: ParameterSet<f32>,
    v: ParameterSet<f32>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParameterSet<f32>, lr: f64) -> Self {
        Self {
            lr,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Rescales `grads` to global norm [`CLIP_NORM`] when larger and returns
    /// the norm before clipping.
    pub fn clip(grads: &mut ParameterSet<f32>) -> f64 {
        let norm = grads.global_norm();
        if norm > CLIP_NORM {
            grads.scale((CLIP_NORM / norm) as f32);
        }
        norm
    }

    /// One update of `params` along `grads`.
    pub fn step(&mut self, params: &mut ParameterSet<f32>, grads: &ParameterSet<f32>) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads.tensor(i).data();
            let m = self.m.tensor_mut(i).data_mut();
            let v = self.v.tensor_mut(i).data_mut();
            let p = params.tensor_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g[j] as f64;
                let mj = BETA1 * m[j] as f64 + (1.0 - BETA1) * gj;
                let vj = BETA2 * v[j] as f64 + (1.0 - BETA2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let upd = self.lr * (mj / c1) / ((vj / c2).sqrt() + EPSILON);
                p[j] = (p[j] as f64 - upd) as f32;
            }
        }
    }
}
