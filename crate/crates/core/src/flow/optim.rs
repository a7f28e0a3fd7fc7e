//! AdamW with decoupled weight decay and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::graph::{Grads, ParamStore};
use crate::{Mat, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Rescale gradients whose global norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Vec<Mat<S>>,
    pub v: Vec<Mat<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        let zeros = || params.ids().map(|id| {
            let p = params.get(id);
            Mat::zeros(p.rows(), p.cols())
        });
        Self {
            step: 0,
            m: zeros().collect(),
            v: zeros().collect(),
        }
    }
}

impl AdamW {
    /// Applies one update in place. Weight decay skips `1 × n` parameters
    /// (biases and norm affines).
    pub fn update<S: Scalar>(&self, params: &mut ParamStore<S>, grads: &mut Grads<S>, state: &mut AdamState<S>) -> Result<()> {
        ensure!(
            state.m.len() == params.len(),
            InvalidArgument,
            "optimizer state tracks {} parameters, model has {}",
            state.m.len(),
            params.len()
        );
        if let Some(max) = self.clip_norm {
            let norm = grads.global_norm().as_f64();
            if norm > max {
                grads.scale(S::lit(max / norm));
            }
        }
        state.step += 1;
        let b1 = S::lit(self.beta1);
        let b2 = S::lit(self.beta2);
        let c1 = S::lit(1.0 - self.beta1.powi(state.step as i32));
        let c2 = S::lit(1.0 - self.beta2.powi(state.step as i32));
        let lr = S::lit(self.lr);
        let eps = S::lit(self.eps);
        let decay = S::lit(self.lr * self.weight_decay);
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let g = grads.get(id);
            let p = params.get_mut(id);
            let decays = p.rows() > 1;
            let (m, v) = (&mut state.m[i], &mut state.v[i]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (S::one() - b1) * gv;
                *vv = b2 * *vv + (S::one() - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                if decays {
                    *pv -= decay * *pv;
                }
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut p = ParamStore::<f64>::new();
        let id = p.insert("w", Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let before = p.get(id).clone();
        let mut g = Grads::zeros_like(&p);
        g.get_mut(id).data_mut().fill(0.5);
        let opt = AdamW {
            lr: 0.0,
            ..Default::default()
        };
        let mut st = AdamState::new(&p);
        opt.update(&mut p, &mut g, &mut st).unwrap();
        assert_eq!(p.get(id), &before);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = ParamStore::<f64>::new();
        let id = p.insert("b", Mat::from_vec(1, 2, vec![0.0, 0.0]));
        let mut g = Grads::zeros_like(&p);
        g.get_mut(id).data_mut().copy_from_slice(&[0.3, -0.2]);
        let opt = AdamW {
            lr: 0.1,
            clip_norm: None,
            ..Default::default()
        };
        let mut st = AdamState::new(&p);
        opt.update(&mut p, &mut g, &mut st).unwrap();
        let d = p.get(id).data();
        assert!((d[0] + 0.1).abs() < 1e-6 && (d[1] - 0.1).abs() < 1e-6);
    }
}
