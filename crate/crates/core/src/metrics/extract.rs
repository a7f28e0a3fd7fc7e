//! Toy feature extractors standing in for pretrained face networks.
//!
//! Every extractor has two routes. The metadata route reads the exact
//! identity / nuisance attached by the renderer; the pixel route works on
//! any frame. A comparison uses the metadata route only when every frame
//! involved carries metadata, so both sides are always measured the same
//! way.

use rand_distr::{Distribution, StandardNormal};

use crate::rng::rng_for;
use crate::synthkit::{background, render_frame, Frame, IdentitySpec, NuisanceState, CHANNELS};

const CHROMA_BINS: usize = 6;
const POOL: usize = 4;
const EXPR_DIM: usize = 8;
const PROJECTION_STREAM: u64 = 0xFEA7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Metadata,
    Pixel,
}

impl Route {
    pub fn for_frames<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Route {
        if frames.into_iter().all(|f| f.meta.is_some()) {
            Route::Metadata
        } else {
            Route::Pixel
        }
    }
}

/// How strongly a pixel differs from the known background, in `[0, 1]`.
fn face_weight(px: &[f32], bg: [f32; 3]) -> f64 {
    let d: f32 = px.iter().zip(bg).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt();
    (((d - 0.02) / 0.06) as f64).clamp(0.0, 1.0)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        v
    } else {
        let k = 1.0 / (v.len() as f64).sqrt();
        vec![k; v.len()]
    }
}

/// Soft histogram of pixel chromaticity `(r, g) / (r + g + b)` over the face
/// region, weighted by intensity; unit norm. Chromaticity is unchanged by a
/// global light scale, so the embedding tracks skin and feature colours.
pub fn chroma_embedding(f: &Frame) -> Vec<f64> {
    let b = CHROMA_BINS;
    let mut hist = vec![0f64; b * b];
    for y in 0..f.height {
        for x in 0..f.width {
            let px = f.pixel(y, x);
            let w = face_weight(px, background(y, x, f.height, f.width));
            let s = (px[0] + px[1] + px[2]) as f64;
            if w == 0.0 || s < 1e-3 {
                continue;
            }
            let cr = px[0] as f64 / s * b as f64 - 0.5;
            let cg = px[1] as f64 / s * b as f64 - 0.5;
            let (r0, g0) = (cr.floor(), cg.floor());
            let (fr, fg) = (cr - r0, cg - g0);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (dg, wg) in [(0, 1.0 - fg), (1, fg)] {
                    let (ri, gi) = (r0 as i64 + dr, g0 as i64 + dg);
                    if (0..b as i64).contains(&ri) && (0..b as i64).contains(&gi) {
                        hist[ri as usize * b + gi as usize] += w * s * wr * wg;
                    }
                }
            }
        }
    }
    normalize(hist)
}

/// `POOL × POOL` average-pooled pixels, `POOL²·C` features.
pub fn pooled_pixels(f: &Frame) -> Vec<f64> {
    let mut out = vec![0f64; POOL * POOL * CHANNELS];
    let mut counts = [0usize; POOL * POOL];
    for y in 0..f.height {
        let py = y * POOL / f.height;
        for x in 0..f.width {
            let px = x * POOL / f.width;
            let cell = py * POOL + px;
            counts[cell] += 1;
            for (c, v) in f.pixel(y, x).iter().enumerate() {
                out[cell * CHANNELS + c] += *v as f64;
            }
        }
    }
    for (cell, &n) in counts.iter().enumerate() {
        for c in 0..CHANNELS {
            out[cell * CHANNELS + c] /= n.max(1) as f64;
        }
    }
    out
}

fn projection(rows: usize, cols: usize, stream: u64) -> Vec<f64> {
    let mut rng = rng_for(PROJECTION_STREAM, stream);
    let scale = 1.0 / (cols as f64).sqrt();
    (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

fn project(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Face mask moments: `(weight, cx, cy, orientation radians)`.
fn head_moments(f: &Frame) -> Option<(f64, f64, f64, f64)> {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut pts = Vec::new();
    for y in 0..f.height {
        for x in 0..f.width {
            let w = face_weight(f.pixel(y, x), background(y, x, f.height, f.width));
            if w > 0.0 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                m += w;
                sx += w * px;
                sy += w * py;
                pts.push((w, px, py));
            }
        }
    }
    if m < 1.0 {
        return None;
    }
    let (cx, cy) = (sx / m, sy / m);
    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    for (w, x, y) in pts {
        mxx += w * (x - cx) * (x - cx);
        myy += w * (y - cy) * (y - cy);
        mxy += w * (x - cx) * (y - cy);
    }
    // Angle of the major axis measured from the image y axis.
    let theta = 0.5 * (2.0 * mxy).atan2(myy - mxx);
    Some((m, cx, cy, -theta))
}

/// Deterministic toy backends for every metric.
#[derive(Debug, Clone)]
pub struct ExtractorSuite {
    expr_proj: Vec<f64>,
    gaze_proj: Vec<f64>,
}

impl Default for ExtractorSuite {
    fn default() -> Self {
        let n = POOL * POOL * CHANNELS;
        Self {
            expr_proj: projection(EXPR_DIM, n, 1),
            gaze_proj: projection(3, n, 2),
        }
    }
}

impl ExtractorSuite {
    /// Unit-norm identity vector.
    pub fn id_embedding(&self, f: &Frame, route: Route) -> Vec<f64> {
        match (&f.meta, route) {
            (Some(m), Route::Metadata) => self.identity_vector(&m.identity, f.height, f.width),
            _ => chroma_embedding(f),
        }
    }

    /// Identity vector of a canonical neutral render of `id`.
    pub fn identity_vector(&self, id: &IdentitySpec, h: usize, w: usize) -> Vec<f64> {
        let f = render_frame(id, &NuisanceState::NEUTRAL, h.max(8), w.max(8)).expect("neutral state is valid");
        chroma_embedding(&f)
    }

    pub fn expression(&self, f: &Frame, route: Route) -> Vec<f64> {
        match (&f.meta, route) {
            (Some(m), Route::Metadata) => vec![m.nuisance.expression as f64],
            _ => project(&self.expr_proj, EXPR_DIM, &pooled_pixels(f)),
        }
    }

    pub fn lighting(&self, f: &Frame, route: Route) -> Vec<f64> {
        match (&f.meta, route) {
            (Some(m), Route::Metadata) => vec![m.nuisance.illumination as f64],
            _ => {
                let mut acc = [0f64; 3];
                let mut wsum = 0.0;
                for y in 0..f.height {
                    for x in 0..f.width {
                        let px = f.pixel(y, x);
                        let w = face_weight(px, background(y, x, f.height, f.width));
                        wsum += w;
                        for c in 0..3 {
                            acc[c] += w * px[c] as f64;
                        }
                    }
                }
                acc.iter().map(|a| a / wsum.max(1e-9)).collect()
            }
        }
    }

    /// Unit 3-vector.
    pub fn gaze(&self, f: &Frame, route: Route) -> Vec<f64> {
        match (&f.meta, route) {
            (Some(m), Route::Metadata) => {
                let n = &m.nuisance;
                normalize(vec![n.pose.sin() as f64, 0.3 * n.expression as f64, n.pose.cos() as f64 + 1.0])
            }
            _ => {
                let mut g = project(&self.gaze_proj, 3, &pooled_pixels(f));
                g[2] += 2.0;
                normalize(g)
            }
        }
    }

    /// `(roll, yaw-like, pitch-like)` in degrees: head rotation plus the head
    /// offset scaled so a half-frame shift reads as 45°.
    pub fn pose(&self, f: &Frame, route: Route) -> Vec<f64> {
        let (h, w) = (f.height as f64, f.width as f64);
        match (&f.meta, route) {
            (Some(m), Route::Metadata) => {
                let n = &m.nuisance;
                vec![
                    (n.pose as f64).to_degrees(),
                    n.translation[0] as f64 / w * 90.0,
                    n.translation[1] as f64 / h * 90.0,
                ]
            }
            _ => match head_moments(f) {
                Some((_, cx, cy, theta)) => vec![theta.to_degrees(), (cx - w / 2.0) / w * 90.0, (cy - h / 2.0) / h * 90.0],
                None => vec![0.0; 3],
            },
        }
    }

    /// Per-video feature for the Fréchet distance: time-averaged pooled
    /// pixels and mean absolute temporal change, concatenated.
    pub fn video_feature(&self, frames: &[Frame]) -> Vec<f64> {
        let pooled: Vec<Vec<f64>> = frames.iter().map(pooled_pixels).collect();
        let n = pooled[0].len();
        let mut mean = vec![0f64; n];
        for p in &pooled {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / pooled.len() as f64;
            }
        }
        let mut motion = vec![0f64; n];
        for pair in pooled.windows(2) {
            for (m, (a, b)) in motion.iter_mut().zip(pair[0].iter().zip(&pair[1])) {
                *m += (b - a).abs() / (pooled.len() - 1) as f64;
            }
        }
        mean.extend(motion);
        mean
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{oracle_swap, render_video, MotionProfile, NuisanceTrack};

    #[test]
    fn embeddings_are_unit_norm() {
        let tr = NuisanceTrack::smooth(3, 1, MotionProfile::default()).unwrap();
        let v = render_video(&IdentitySpec::from_seed(5), &tr, 32, 32).unwrap();
        let s = ExtractorSuite::default();
        for f in v.frames() {
            for r in [Route::Metadata, Route::Pixel] {
                let e = s.id_embedding(&f, r);
                assert!((e.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
                let g = s.gaze(&f, r);
                assert!((g.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let black = Frame::black(16, 16);
        assert!((chroma_embedding(&black).iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_pose_follows_rendered_pose() {
        let s = ExtractorSuite::default();
        let id = IdentitySpec::from_seed(3);
        for pose in [-0.4f32, 0.0, 0.3] {
            let n = NuisanceState {
                pose,
                ..NuisanceState::NEUTRAL
            };
            let f = render_frame(&id, &n, 32, 32).unwrap();
            let meta = s.pose(&f, Route::Metadata);
            let px = s.pose(&f, Route::Pixel);
            assert!((meta[0] - px[0]).abs() < 6.0, "pose {pose}: {meta:?} vs {px:?}");
        }
    }

    #[test]
    fn oracle_swap_keeps_nuisance_readouts() {
        let s = ExtractorSuite::default();
        let tr = NuisanceTrack::smooth(4, 8, MotionProfile::default()).unwrap();
        let v = render_video(&IdentitySpec::from_seed(1), &tr, 32, 32).unwrap();
        for (t, f) in v.frames().enumerate() {
            let g = oracle_swap(&f, tr.get(t).unwrap(), &IdentitySpec::from_seed(2)).unwrap();
            assert_eq!(s.pose(&f, Route::Metadata), s.pose(&g, Route::Metadata));
            assert_eq!(s.lighting(&f, Route::Metadata), s.lighting(&g, Route::Metadata));
        }
    }
}
