//! Fixed sinusoidal embeddings and latent token grouping.

use crate::{Mat, Scalar};

/// Sinusoidal embedding of a scalar `x` into `width` features: the first
/// half are sines, the second half cosines, over geometric frequencies.
fn sinusoid(x: f64, width: usize, max_period: f64, out: &mut [f64]) {
    let half = width / 2;
    for k in 0..half {
        let freq = (-(max_period.ln()) * k as f64 / half as f64).exp();
        out[k] = (x * freq).sin();
        out[half + k] = (x * freq).cos();
    }
}

/// `1 × width` embedding of a flow time `t ∈ [0, 1]`.
pub fn timestep_embedding<S: Scalar>(t: S, width: usize) -> Mat<S> {
    let mut e = vec![0f64; width];
    sinusoid(t.as_f64() * 1000.0, width, 10_000.0, &mut e);
    Mat::from_vec(1, width, e.into_iter().map(S::lit).collect())
}

/// Positional table for grouped tokens: frame position in the first half of
/// the features, row and column in a quarter each.
pub fn position_table<S: Scalar>(frame_positions: &[usize], grid: (usize, usize), width: usize) -> Mat<S> {
    let (gr, gc) = grid;
    let fw = width / 2;
    let rw = width / 4;
    let cw = width - fw - rw;
    let mut m = Mat::zeros(frame_positions.len() * gr * gc, width);
    let mut buf = vec![0f64; width];
    for (i, &f) in frame_positions.iter().enumerate() {
        for r in 0..gr {
            for c in 0..gc {
                sinusoid(f as f64, fw, 100.0, &mut buf[..fw]);
                sinusoid(r as f64, rw, 100.0, &mut buf[fw..fw + rw]);
                sinusoid(c as f64, cw, 100.0, &mut buf[fw + rw..]);
                let row = m.row_mut((i * gr + r) * gc + c);
                for (o, &v) in row.iter_mut().zip(&buf) {
                    *o = S::lit(v * 0.5);
                }
            }
        }
    }
    m
}

/// Gather index that merges `g × g` neighbourhoods of latent tokens into one
/// wide token: `grouped[j] = tokens[index[j]]` over flat row-major buffers.
/// Tokens are `frames × grid` rows of `ch` features; grouped rows hold the
/// `g²` members in `(dy, dx)` order.
pub fn group_index(frames: usize, grid: (usize, usize), ch: usize, g: usize) -> Vec<usize> {
    let (gr, gc) = grid;
    let (hr, hc) = (gr / g, gc / g);
    let mut idx = Vec::with_capacity(frames * gr * gc * ch);
    for f in 0..frames {
        for r in 0..hr {
            for c in 0..hc {
                for dy in 0..g {
                    for dx in 0..g {
                        let src = (f * gr + r * g + dy) * gc + c * g + dx;
                        idx.extend((0..ch).map(|k| src * ch + k));
                    }
                }
            }
        }
    }
    idx
}

pub fn invert(index: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; index.len()];
    for (j, &i) in index.iter().enumerate() {
        inv[i] = j;
    }
    inv
}

pub fn gather<S: Scalar>(data: &[S], index: &[usize], rows: usize, cols: usize) -> Mat<S> {
    Mat::from_vec(rows, cols, index.iter().map(|&i| data[i]).collect())
}
