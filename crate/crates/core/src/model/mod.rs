//! Velocity model `u(x_t, c, t)`: a small diffusion transformer backbone
//! plus the attribute encoder that injects conditioning into it.

mod embed;
mod layers;

use std::borrow::Cow;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::conditioning::{map_blocks_to_layers, AttributeEncoder, BlockMapping, ConditioningPack, SegmentKind};
use crate::error::{ensure, Error, Result};
use crate::graph::{Grads, ParamStore, Tape, Var};
use crate::rng::rng_for;
use crate::{Mat, Scalar};

pub use embed::{gather, group_index, invert, position_table, timestep_embedding};
pub use layers::{Block, Linear, Norm};

const INIT_STREAM: u64 = 0x1417;

/// Floor on `1 − t` when turning the clean-latent estimate into a velocity.
pub const MIN_HORIZON: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channels per latent token.
    pub latent_dim: usize,
    /// Side of the square neighbourhood of latent tokens merged into one
    /// transformer token.
    pub group: usize,
    pub width: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_ratio: usize,
    pub encoder_depth: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 48,
            group: 2,
            width: 64,
            heads: 4,
            depth: 4,
            mlp_ratio: 4,
            encoder_depth: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.latent_dim > 0 && self.group > 0, Config, "latent dim and group must be positive");
        ensure!(self.depth > 0, Config, "backbone depth must be positive");
        ensure!(
            self.heads > 0 && self.width.is_multiple_of(self.heads),
            Config,
            "width {} not divisible by {} heads",
            self.width,
            self.heads
        );
        ensure!(self.width.is_multiple_of(4), Config, "width {} must be a multiple of 4", self.width);
        ensure!(self.mlp_ratio > 0, Config, "mlp ratio must be positive");
        map_blocks_to_layers(self.encoder_depth, self.depth)?;
        Ok(())
    }

    /// Width of one grouped latent token.
    pub fn token_in(&self) -> usize {
        self.group * self.group * self.latent_dim
    }
}

#[derive(Debug, Clone)]
struct Backbone {
    input: Linear,
    time1: Linear,
    time2: Linear,
    blocks: Vec<Block>,
    out_norm: Norm,
    out: Linear,
}

/// How the attribute-encoder terms enter the backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Injection<S> {
    /// Add `scale · A_h` before each mapped layer.
    Scaled(S),
    /// Run the bare backbone.
    Disabled,
}

impl<S: Scalar> Default for Injection<S> {
    fn default() -> Self {
        Injection::Scaled(S::one())
    }
}

/// The additive term applied before one backbone layer.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionRecord<S> {
    pub layer: usize,
    pub block: usize,
    pub term: Mat<S>,
}

/// Attribute-encoder outputs for one pack. They do not depend on `x_t` or
/// `t`, so sampling computes them once per chunk.
#[derive(Debug, Clone)]
pub struct EncoderCache<S> {
    pub hints: Vec<Mat<S>>,
    layout: Layout,
    prior: Mat<S>,
}

/// Source segment plus the keyframe edits (keyframe minus the source frame
/// at its position) blended linearly across the segment. An all-zero
/// (black) keyframe slot contributes no edit; with one usable keyframe its
/// edit is applied to every frame.
pub fn guidance_prior<S: Scalar>(pack: &ConditioningPack<S>) -> Result<Mat<S>> {
    let seg = pack.source_segment();
    let n = pack.tokens_per_frame();
    let f = seg.frames;
    let mut base = pack.tokens.slice_rows(seg.frame_start * n, f * n)?;
    let edit = |kind: SegmentKind, at: usize| -> Result<Option<Mat<S>>> {
        let Some(k) = pack.segment(kind) else { return Ok(None) };
        let key = pack.tokens.slice_rows(k.frame_start * n, n)?;
        if key.data().iter().all(|v| v.is_zero()) {
            return Ok(None);
        }
        Ok(Some(key.sub(&base.slice_rows(at * n, n)?)?))
    };
    let start = edit(SegmentKind::StartKeyframe, 0)?;
    let end = edit(SegmentKind::EndKeyframe, f - 1)?;
    for j in 0..f {
        let w = if f > 1 { S::lit(j as f64 / (f - 1) as f64) } else { S::zero() };
        let (ws, we) = match (&start, &end) {
            (Some(_), Some(_)) => (S::one() - w, w),
            _ => (S::one(), S::one()),
        };
        for (e, k) in [(&start, ws), (&end, we)] {
            if let Some(e) = e {
                for r in 0..n {
                    let row = base.row_mut(j * n + r);
                    for (b, d) in row.iter_mut().zip(e.row(r)) {
                        *b += k * *d;
                    }
                }
            }
        }
    }
    Ok(base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    frames: usize,
    frame_start: usize,
    grid: (usize, usize),
}

impl Layout {
    fn of<S: Scalar>(pack: &ConditioningPack<S>) -> Self {
        let s = pack.source_segment();
        Self {
            frames: s.frames,
            frame_start: s.frame_start,
            grid: pack.grid,
        }
    }
}

/// Where the injection terms come from during a forward pass.
#[derive(Clone, Copy)]
pub enum Hints<'a, S> {
    Live(&'a ConditioningPack<S>),
    Cached(&'a EncoderCache<S>),
}

impl<S: Scalar> Hints<'_, S> {
    fn layout(&self) -> Layout {
        match self {
            Hints::Live(p) => Layout::of(p),
            Hints::Cached(c) => c.layout,
        }
    }

    fn prior(&self) -> Result<Cow<'_, Mat<S>>> {
        Ok(match self {
            Hints::Live(p) => Cow::Owned(guidance_prior(p)?),
            Hints::Cached(c) => Cow::Borrowed(&c.prior),
        })
    }
}

#[derive(Debug, Clone)]
pub struct VelocityModel<S> {
    config: ModelConfig,
    params: ParamStore<S>,
    backbone: Backbone,
    encoder: AttributeEncoder,
}

impl<S: Scalar> VelocityModel<S> {
    /// Seeded initialisation; the encoder blocks start as copies of the
    /// backbone blocks they feed and the encoder output projections start
    /// at zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, INIT_STREAM);
        let mut p = ParamStore::new();
        let w = config.width;
        let residual = 1.0 / (2.0 * config.depth as f64).sqrt();
        let input = Linear::init(&mut p, "backbone.input", config.token_in(), w, 1.0, &mut rng);
        let time1 = Linear::init(&mut p, "backbone.time1", w, w, 1.0, &mut rng);
        let time2 = Linear::init(&mut p, "backbone.time2", w, w, 1.0, &mut rng);
        let blocks = (0..config.depth)
            .map(|l| Block::init(&mut p, &format!("backbone.block{l}"), w, config.mlp_ratio, residual, &mut rng))
            .collect::<Vec<_>>();
        let out_norm = Norm::init(&mut p, "backbone.out_norm", w);
        let out = Linear::init(&mut p, "backbone.out", w, config.token_in(), 0.1, &mut rng);
        let backbone = Backbone {
            input,
            time1,
            time2,
            blocks,
            out_norm,
            out,
        };
        let encoder = AttributeEncoder::init(&mut p, &config, &backbone.blocks, &mut rng)?;
        Ok(Self {
            config,
            params: p,
            backbone,
            encoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn encoder(&self) -> &AttributeEncoder {
        &self.encoder
    }

    pub fn mapping(&self) -> &BlockMapping {
        self.encoder.mapping()
    }

    /// Same architecture and values in another precision.
    pub fn cast<T: Scalar>(&self) -> VelocityModel<T> {
        let mut m = VelocityModel::<T>::new(self.config).expect("config already validated");
        for id in self.params.ids() {
            *m.params.get_mut(id) = self.params.get(id).cast();
        }
        m
    }

    /// Replaces parameter values by name; every parameter must be present
    /// with a matching shape.
    pub fn load_values(&mut self, values: Vec<(String, Mat<S>)>) -> Result<()> {
        ensure!(
            values.len() == self.params.len(),
            Format,
            "expected {} parameters, got {}",
            self.params.len(),
            values.len()
        );
        for (name, v) in values {
            let id = self
                .params
                .id(&name)
                .ok_or_else(|| Error::Format(format!("unknown parameter `{name}`")))?;
            let cur = self.params.get_mut(id);
            ensure!(
                cur.shape() == v.shape(),
                Format,
                "parameter `{name}` has shape {:?}, checkpoint holds {:?}",
                cur.shape(),
                v.shape()
            );
            *cur = v;
        }
        Ok(())
    }

    pub fn encoder_cache(&self, pack: &ConditioningPack<S>) -> Result<EncoderCache<S>> {
        let mut tape = Tape::new(&self.params);
        let hints = self.encoder.forward_on(&mut tape, &self.config, pack)?;
        Ok(EncoderCache {
            hints: hints.into_iter().map(|v| tape.value(v).clone()).collect(),
            layout: Layout::of(pack),
            prior: guidance_prior(pack)?,
        })
    }

    /// Records the velocity prediction for `xt` on `tape`. `xt` holds the
    /// latent tokens of the window being generated, laid out like the pack's
    /// source segment.
    pub fn forward_on(
        &self,
        tape: &mut Tape<'_, S>,
        xt: &Mat<S>,
        hints: Hints<'_, S>,
        t: S,
        injection: Injection<S>,
        mut trace: Option<&mut Vec<InjectionRecord<S>>>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let layout = hints.layout();
        let (gr, gc) = layout.grid;
        let g = cfg.group;
        ensure!(
            gr % g == 0 && gc % g == 0,
            Shape,
            "latent grid {gr}x{gc} not divisible by group {g}"
        );
        let n = layout.frames * gr * gc;
        ensure!(
            xt.shape() == (n, cfg.latent_dim),
            Shape,
            "x_t is {:?}, expected {n}x{}",
            xt.shape(),
            cfg.latent_dim
        );
        let grouped_grid = (gr / g, gc / g);
        let rows = n / (g * g);
        let index = group_index(layout.frames, layout.grid, cfg.latent_dim, g);
        let x = tape.constant(gather(xt.data(), &index, rows, cfg.token_in()));

        let bb = &self.backbone;
        let mut h = bb.input.forward(tape, x)?;
        let positions: Vec<usize> = (layout.frame_start..layout.frame_start + layout.frames).collect();
        let pos = tape.constant(position_table(&positions, grouped_grid, cfg.width));
        h = tape.add(h, pos)?;
        let te = tape.constant(timestep_embedding(t, cfg.width));
        let te = bb.time1.forward(tape, te)?;
        let te = tape.silu(te);
        let te = bb.time2.forward(tape, te)?;
        h = tape.add_row(h, te)?;

        let hint_vars = match (injection, hints) {
            (Injection::Disabled, _) => Vec::new(),
            (_, Hints::Live(pack)) => self.encoder.forward_on(tape, cfg, pack)?,
            (_, Hints::Cached(c)) => c.hints.iter().map(|m| tape.constant(m.clone())).collect(),
        };
        for (l, block) in bb.blocks.iter().enumerate() {
            if let (Injection::Scaled(k), Some(b)) = (injection, self.encoder.mapping().block_for_layer(l)) {
                let term = tape.scale(hint_vars[b], k);
                ensure!(
                    tape.value(term).shape() == tape.value(h).shape(),
                    Shape,
                    "injection term {:?} vs hidden {:?} at layer {l}",
                    tape.value(term).shape(),
                    tape.value(h).shape()
                );
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(InjectionRecord {
                        layer: l,
                        block: b,
                        term: tape.value(term).clone(),
                    });
                }
                h = tape.add(h, term)?;
            }
            h = block.forward(tape, h, cfg.heads)?;
        }
        let h = bb.out_norm.forward(tape, h)?;
        let y = bb.out.forward(tape, h)?;
        // The head corrects the guidance prior; the velocity towards that
        // clean estimate is (x̂1 − x_t) / (1 − t).
        let src = tape.constant(gather(hints.prior()?.data(), &index, rows, cfg.token_in()));
        let x1 = tape.add(y, src)?;
        let neg_x = tape.scale(x, -S::one());
        let d = tape.add(x1, neg_x)?;
        let horizon = (S::one() - t).max(S::lit(MIN_HORIZON));
        let y = tape.scale(d, S::one() / horizon);
        let inv: Rc<[usize]> = invert(&index).into();
        tape.permute(y, inv, n, cfg.latent_dim)
    }

    /// Velocity prediction as a plain matrix.
    pub fn predict(&self, xt: &Mat<S>, hints: Hints<'_, S>, t: S, injection: Injection<S>) -> Result<Mat<S>> {
        let mut tape = Tape::new(&self.params);
        let v = self.forward_on(&mut tape, xt, hints, t, injection, None)?;
        Ok(tape.value(v).clone())
    }

    /// Rectified-flow loss for one sample and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        xt: &Mat<S>,
        pack: &ConditioningPack<S>,
        t: S,
        vt: &Mat<S>,
    ) -> Result<(S, Grads<S>)> {
        let mut tape = Tape::new(&self.params);
        let pred = self.forward_on(&mut tape, xt, Hints::Live(pack), t, Injection::default(), None)?;
        let target = tape.constant(vt.clone());
        let loss = tape.mse(pred, target)?;
        let value = tape.value(loss).get(0, 0);
        let grads = tape.backward(loss)?;
        Ok((value, grads))
    }
}
