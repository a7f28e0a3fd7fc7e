//! Fixed linear patch codec between pixel videos and latent token grids.
//!
//! Each `p × p × C` patch is flattened in `(dy, dx, c)` order and projected
//! onto `d` seeded orthonormal directions. With the default `d = p²·C` the
//! projection is square, so decoding is exact up to float rounding.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::rng_for;
use crate::synthkit::{Frame, VideoTensor, CHANNELS};
use crate::{Mat, Scalar};

const BASIS_STREAM: u64 = 0xC0DEC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub patch: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            dim: 4 * 4 * CHANNELS,
            seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * CHANNELS
    }
}

/// `T' × N × d` latent tokens stored as a `(T'·N) × d` matrix, frame-major,
/// tokens within a frame in row-major patch order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo<S> {
    pub tokens: Mat<S>,
    pub frames: usize,
    /// Patch rows and columns per frame.
    pub grid: (usize, usize),
    pub codec: CodecConfig,
    /// `(T, H, W, C)` of the pixel video this came from.
    pub source_dims: (usize, usize, usize, usize),
}

impl<S: Scalar> LatentVideo<S> {
    pub fn tokens_per_frame(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn dim(&self) -> usize {
        self.codec.dim
    }

    pub fn frame_tokens(&self, t: usize) -> Result<Mat<S>> {
        let n = self.tokens_per_frame();
        self.tokens.slice_rows(t * n, n)
    }

    /// Same layout with new token values.
    pub fn with_tokens(&self, tokens: Mat<S>) -> Result<Self> {
        ensure!(
            tokens.shape() == self.tokens.shape(),
            Shape,
            "token matrix {:?} vs {:?}",
            tokens.shape(),
            self.tokens.shape()
        );
        Ok(Self {
            tokens,
            ..self.clone()
        })
    }

    /// Concatenates latent videos with matching codec and frame geometry.
    pub fn concat(parts: &[&LatentVideo<S>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        for p in parts {
            ensure!(p.codec == first.codec, Config, "codec mismatch in concatenation");
            ensure!(p.grid == first.grid, Shape, "latent grid mismatch in concatenation");
        }
        let mats: Vec<&Mat<S>> = parts.iter().map(|p| &p.tokens).collect();
        let frames = parts.iter().map(|p| p.frames).sum();
        let (_, h, w, c) = first.source_dims;
        Ok(Self {
            tokens: Mat::vstack(&mats)?,
            frames,
            grid: first.grid,
            codec: first.codec,
            source_dims: (frames, h, w, c),
        })
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut mats = Vec::with_capacity(indices.len());
        for &t in indices {
            ensure!(t < self.frames, InvalidArgument, "latent frame {t} outside {}", self.frames);
            mats.push(self.frame_tokens(t)?);
        }
        let refs: Vec<&Mat<S>> = mats.iter().collect();
        let (_, h, w, c) = self.source_dims;
        Ok(Self {
            tokens: Mat::vstack(&refs)?,
            frames: indices.len(),
            grid: self.grid,
            codec: self.codec,
            source_dims: (indices.len(), h, w, c),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LinearCodec {
    config: CodecConfig,
    /// `patch_len × d`, orthonormal columns.
    basis: Vec<f64>,
}

impl LinearCodec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        let p = config.patch_len();
        ensure!(config.patch >= 1, Config, "patch size must be positive");
        ensure!(
            (1..=p).contains(&config.dim),
            Config,
            "latent dim {} must lie in 1..={p} for patch {}",
            config.dim,
            config.patch
        );
        let mut rng = rng_for(config.seed, BASIS_STREAM);
        let g = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let mut basis = vec![0.0; p * config.dim];
        for i in 0..p {
            for j in 0..config.dim {
                basis[i * config.dim + j] = q[(i, j)];
            }
        }
        Ok(Self { config, basis })
    }

    pub fn config(&self) -> CodecConfig {
        self.config
    }

    fn grid(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let p = self.config.patch;
        ensure!(
            h.is_multiple_of(p) && w.is_multiple_of(p),
            Shape,
            "frame {h}x{w} not divisible by patch size {p}"
        );
        Ok((h / p, w / p))
    }

    fn encode_pixels<S: Scalar>(&self, data: &[f32], frames: usize, h: usize, w: usize, out: &mut Vec<S>) {
        let p = self.config.patch;
        let d = self.config.dim;
        let (gr, gc) = (h / p, w / p);
        let mut patch = vec![0f64; self.config.patch_len()];
        for t in 0..frames {
            let base = t * h * w * CHANNELS;
            for pr in 0..gr {
                for pc in 0..gc {
                    let mut k = 0;
                    for dy in 0..p {
                        for dx in 0..p {
                            let o = base + ((pr * p + dy) * w + pc * p + dx) * CHANNELS;
                            for c in 0..CHANNELS {
                                patch[k] = data[o + c] as f64;
                                k += 1;
                            }
                        }
                    }
                    for j in 0..d {
                        let z: f64 = patch.iter().enumerate().map(|(i, &x)| x * self.basis[i * d + j]).sum();
                        out.push(S::lit(z));
                    }
                }
            }
        }
    }

    pub fn encode<S: Scalar>(&self, v: &VideoTensor) -> Result<LatentVideo<S>> {
        let (t, h, w, c) = v.dims();
        let grid = self.grid(h, w)?;
        let mut data = Vec::with_capacity(t * grid.0 * grid.1 * self.config.dim);
        self.encode_pixels(v.data(), t, h, w, &mut data);
        Ok(LatentVideo {
            tokens: Mat::from_vec(t * grid.0 * grid.1, self.config.dim, data),
            frames: t,
            grid,
            codec: self.config,
            source_dims: (t, h, w, c),
        })
    }

    pub fn encode_frame<S: Scalar>(&self, f: &Frame) -> Result<LatentVideo<S>> {
        ensure!(f.channels == CHANNELS, Shape, "expected {CHANNELS} channels, found {}", f.channels);
        let grid = self.grid(f.height, f.width)?;
        let mut data = Vec::with_capacity(grid.0 * grid.1 * self.config.dim);
        self.encode_pixels(&f.data, 1, f.height, f.width, &mut data);
        Ok(LatentVideo {
            tokens: Mat::from_vec(grid.0 * grid.1, self.config.dim, data),
            frames: 1,
            grid,
            codec: self.config,
            source_dims: (1, f.height, f.width, CHANNELS),
        })
    }

    /// Encoded all-black frame of the given size.
    pub fn black<S: Scalar>(&self, h: usize, w: usize) -> Result<LatentVideo<S>> {
        self.encode_frame(&Frame::black(h, w))
    }

    /// Pixel values before clamping, `T·H·W·C` in `(t, h, w, c)` order.
    pub fn decode_raw<S: Scalar>(&self, z: &LatentVideo<S>) -> Result<Vec<f32>> {
        ensure!(
            z.codec == self.config,
            Config,
            "latent was produced by codec {:?}, this codec is {:?}",
            z.codec,
            self.config
        );
        let p = self.config.patch;
        let d = self.config.dim;
        let (gr, gc) = z.grid;
        let (h, w) = (gr * p, gc * p);
        ensure!(
            z.tokens.shape() == (z.frames * gr * gc, d),
            Shape,
            "latent tokens {:?} do not match {} frames of {gr}x{gc}",
            z.tokens.shape(),
            z.frames
        );
        let mut out = vec![0f32; z.frames * h * w * CHANNELS];
        let mut patch = vec![0f64; self.config.patch_len()];
        for t in 0..z.frames {
            for pr in 0..gr {
                for pc in 0..gc {
                    let tok = z.tokens.row((t * gr + pr) * gc + pc);
                    for (i, x) in patch.iter_mut().enumerate() {
                        let b = &self.basis[i * d..(i + 1) * d];
                        *x = b.iter().zip(tok).map(|(&b, &z)| b * z.as_f64()).sum();
                    }
                    let mut k = 0;
                    for dy in 0..p {
                        for dx in 0..p {
                            let o = ((t * h + pr * p + dy) * w + pc * p + dx) * CHANNELS;
                            for c in 0..CHANNELS {
                                out[o + c] = patch[k] as f32;
                                k += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Decodes to a video, clamping pixels into `[0, 1]`.
    pub fn decode<S: Scalar>(&self, z: &LatentVideo<S>) -> Result<VideoTensor> {
        let mut data = self.decode_raw(z)?;
        for x in &mut data {
            *x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        }
        let (gr, gc) = z.grid;
        VideoTensor::new(z.frames, gr * self.config.patch, gc * self.config.patch, data)
    }
}
