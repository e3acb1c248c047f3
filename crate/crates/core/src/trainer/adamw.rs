use crate::error::Result;
use crate::numcore::{cst, Float, Gradients, ParamStore};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with decoupled weight decay, applied to every parameter.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub lr: f64,
    pub weight_decay: f64,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Float> AdamW<T> {
    pub fn new(params: &ParamStore<T>, lr: f64, weight_decay: f64) -> Self {
        let zeros = || params.ids().map(|id| vec![T::zero(); params.get(id).len()]).collect();
        Self {
            lr,
            weight_decay,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update. Parameters without a gradient are treated as having a
    /// zero gradient, so they still decay.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        self.t += 1;
        let (b1, b2) = (cst::<T>(ADAM_BETA1), cst::<T>(ADAM_BETA2));
        let one = T::one();
        let lr = cst::<T>(self.lr);
        let decay = one - cst::<T>(self.lr * self.weight_decay);
        let bc1 = one - b1.powi(self.t);
        let bc2 = one - b2.powi(self.t);
        let eps = cst::<T>(ADAM_EPS);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(T::zero(), |t| t.data()[i]);
                p[i] = p[i] * decay;
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
