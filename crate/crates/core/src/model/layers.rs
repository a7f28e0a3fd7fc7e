//! Parameter bundles for the transformer stack and their forward passes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{ParamId, ParamStore, Tape, Var};
use crate::{Mat, Scalar};

fn normal<S: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Mat<S> {
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        S::lit(z * std)
    })
}

fn lookup<S: Scalar>(store: &ParamStore<S>, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Weights drawn from `N(0, (gain / sqrt(fan_in))²)`, zero bias.
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        Self {
            w: store.insert(format!("{name}.w"), normal(fan_in, fan_out, std, rng)),
            b: store.insert(format!("{name}.b"), Mat::zeros(1, fan_out)),
        }
    }

    pub fn zeros<S: Scalar>(store: &mut ParamStore<S>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: store.insert(format!("{name}.w"), Mat::zeros(fan_in, fan_out)),
            b: store.insert(format!("{name}.b"), Mat::zeros(1, fan_out)),
        }
    }

    pub fn copy<S: Scalar>(store: &mut ParamStore<S>, name: &str, from: &Linear) -> Self {
        let (w, b) = (store.get(from.w).clone(), store.get(from.b).clone());
        Self {
            w: store.insert(format!("{name}.w"), w),
            b: store.insert(format!("{name}.b"), b),
        }
    }

    pub fn find<S: Scalar>(store: &ParamStore<S>, name: &str) -> Result<Self> {
        Ok(Self {
            w: lookup(store, &format!("{name}.w"))?,
            b: lookup(store, &format!("{name}.b"))?,
        })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.linear(x, w, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn init<S: Scalar>(store: &mut ParamStore<S>, name: &str, width: usize) -> Self {
        Self {
            gamma: store.insert(format!("{name}.gamma"), Mat::filled(1, width, S::one())),
            beta: store.insert(format!("{name}.beta"), Mat::zeros(1, width)),
        }
    }

    pub fn copy<S: Scalar>(store: &mut ParamStore<S>, name: &str, from: &Norm) -> Self {
        let (g, b) = (store.get(from.gamma).clone(), store.get(from.beta).clone());
        Self {
            gamma: store.insert(format!("{name}.gamma"), g),
            beta: store.insert(format!("{name}.beta"), b),
        }
    }

    pub fn find<S: Scalar>(store: &ParamStore<S>, name: &str) -> Result<Self> {
        Ok(Self {
            gamma: lookup(store, &format!("{name}.gamma"))?,
            beta: lookup(store, &format!("{name}.beta"))?,
        })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b)
    }
}

/// Pre-norm transformer block: self-attention then a GELU MLP, each with a
/// residual connection.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub norm1: Norm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Block {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        width: usize,
        mlp_ratio: usize,
        residual_gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let hidden = width * mlp_ratio;
        Self {
            norm1: Norm::init(store, &format!("{name}.norm1"), width),
            qkv: Linear::init(store, &format!("{name}.qkv"), width, 3 * width, 1.0, rng),
            proj: Linear::init(store, &format!("{name}.proj"), width, width, residual_gain, rng),
            norm2: Norm::init(store, &format!("{name}.norm2"), width),
            fc1: Linear::init(store, &format!("{name}.fc1"), width, hidden, 1.0, rng),
            fc2: Linear::init(store, &format!("{name}.fc2"), hidden, width, residual_gain, rng),
        }
    }

    /// Duplicates another block's current values under a new name.
    pub fn copy<S: Scalar>(store: &mut ParamStore<S>, name: &str, from: &Block) -> Self {
        Self {
            norm1: Norm::copy(store, &format!("{name}.norm1"), &from.norm1),
            qkv: Linear::copy(store, &format!("{name}.qkv"), &from.qkv),
            proj: Linear::copy(store, &format!("{name}.proj"), &from.proj),
            norm2: Norm::copy(store, &format!("{name}.norm2"), &from.norm2),
            fc1: Linear::copy(store, &format!("{name}.fc1"), &from.fc1),
            fc2: Linear::copy(store, &format!("{name}.fc2"), &from.fc2),
        }
    }

    pub fn find<S: Scalar>(store: &ParamStore<S>, name: &str) -> Result<Self> {
        Ok(Self {
            norm1: Norm::find(store, &format!("{name}.norm1"))?,
            qkv: Linear::find(store, &format!("{name}.qkv"))?,
            proj: Linear::find(store, &format!("{name}.proj"))?,
            norm2: Norm::find(store, &format!("{name}.norm2"))?,
            fc1: Linear::find(store, &format!("{name}.fc1"))?,
            fc2: Linear::find(store, &format!("{name}.fc2"))?,
        })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var, heads: usize) -> Result<Var> {
        let h = self.norm1.forward(tape, x)?;
        let qkv = self.qkv.forward(tape, h)?;
        let a = tape.attention(qkv, heads)?;
        let a = self.proj.forward(tape, a)?;
        let x = tape.add(x, a)?;
        let h = self.norm2.forward(tape, x)?;
        let h = self.fc1.forward(tape, h)?;
        let h = tape.gelu(h);
        let h = self.fc2.forward(tape, h)?;
        tape.add(x, h)
    }
}
