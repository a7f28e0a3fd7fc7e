//! Gaussian-blob face renderer.
//!
//! A face is a soft-edged head ellipse in the identity's skin colour with
//! 2–4 Gaussian feature blobs on top. Pose rotates the whole face about its
//! centre, translation shifts it, illumination scales its colours and
//! expression stretches the first ("mouth") blob vertically. The background
//! is a fixed dark gradient that does not depend on identity or nuisance.

use super::identity::IdentitySpec;
use super::nuisance::{NuisanceState, NuisanceTrack};
use super::video::{Frame, FrameMeta, MaskVideo, VideoMeta, VideoTensor, CHANNELS};
use crate::error::{ensure, Result};

pub const MIN_DIM: usize = 8;
/// Head radius as a fraction of `min(H, W)`.
pub const HEAD_SCALE: f32 = 0.28;
/// Ellipse semi-axes in head-radius units (horizontal, vertical).
pub const HEAD_AXES: (f32, f32) = (0.85, 1.15);
/// Normalised ellipse radius below which a pixel is editable.
pub const MASK_RHO: f32 = 1.15;
const EDGE_SOFTNESS: f32 = 0.05;
const BLOB_SIGMA: f32 = 0.6;
const MOUTH_STRETCH: f32 = 0.45;
const SHADING: f32 = 0.12;

#[inline]
pub fn background(y: usize, x: usize, h: usize, w: usize) -> [f32; 3] {
    [
        0.06 + 0.1 * (x as f32 + 0.5) / w as f32,
        0.06 + 0.1 * (y as f32 + 0.5) / h as f32,
        0.12,
    ]
}

/// Analytic head placement for one frame.
#[derive(Debug, Clone, Copy)]
pub struct HeadGeometry {
    pub center: [f32; 2],
    pub radius: f32,
    pub pose: f32,
}

impl HeadGeometry {
    pub fn new(state: &NuisanceState, h: usize, w: usize) -> Self {
        Self {
            center: [
                w as f32 / 2.0 + state.translation[0],
                h as f32 / 2.0 + state.translation[1],
            ],
            radius: HEAD_SCALE * h.min(w) as f32,
            pose: state.pose,
        }
    }

    /// Head-frame coordinates of a pixel centre.
    #[inline]
    pub fn local(&self, y: usize, x: usize) -> (f32, f32) {
        let dx = x as f32 + 0.5 - self.center[0];
        let dy = y as f32 + 0.5 - self.center[1];
        let (s, c) = self.pose.sin_cos();
        (dx * c + dy * s, -dx * s + dy * c)
    }

    /// Normalised ellipse radius (1.0 on the head outline).
    #[inline]
    pub fn rho(&self, y: usize, x: usize) -> f32 {
        let (u, v) = self.local(y, x);
        let a = HEAD_AXES.0 * self.radius;
        let b = HEAD_AXES.1 * self.radius;
        ((u / a).powi(2) + (v / b).powi(2)).sqrt()
    }

    /// Axis-aligned extent `[x0, y0, x1, y1]` of the ellipse scaled by `rho`.
    pub fn extent(&self, rho: f32) -> [f32; 4] {
        let a = HEAD_AXES.0 * self.radius * rho;
        let b = HEAD_AXES.1 * self.radius * rho;
        let (s, c) = self.pose.sin_cos();
        let ex = ((a * c).powi(2) + (b * s).powi(2)).sqrt();
        let ey = ((a * s).powi(2) + (b * c).powi(2)).sqrt();
        [
            self.center[0] - ex,
            self.center[1] - ey,
            self.center[0] + ex,
            self.center[1] + ey,
        ]
    }
}

fn check_dims(h: usize, w: usize) -> Result<()> {
    ensure!(
        h >= MIN_DIM && w >= MIN_DIM,
        Size,
        "frame {h}x{w} is smaller than the {MIN_DIM}x{MIN_DIM} minimum"
    );
    Ok(())
}

fn render_pixels(id: &IdentitySpec, state: &NuisanceState, h: usize, w: usize) -> Vec<f32> {
    let geo = HeadGeometry::new(state, h, w);
    let r = geo.radius;
    let mut data = vec![0f32; h * w * CHANNELS];
    for y in 0..h {
        for x in 0..w {
            let bg = background(y, x, h, w);
            let (u, v) = geo.local(y, x);
            let rho = geo.rho(y, x);
            let alpha_head = 1.0 / (1.0 + ((rho - 1.0) / EDGE_SOFTNESS).exp());
            let shade = state.illumination * (1.0 - SHADING * v / (HEAD_AXES.1 * r));
            let mut face = id.color.map(|v| v * shade);
            for (i, blob) in id.blobs.iter().enumerate() {
                let sx = blob.radius * r * BLOB_SIGMA;
                let sy = if i == 0 {
                    sx * (1.0 + MOUTH_STRETCH * state.expression)
                } else {
                    sx
                };
                let du = (u - blob.offset[0] * r) / sx;
                let dv = (v - blob.offset[1] * r) / sy;
                let a = (-0.5 * (du * du + dv * dv)).exp();
                for (f, fc) in face.iter_mut().zip(id.feature_color) {
                    *f = *f * (1.0 - a) + fc * shade * a;
                }
            }
            let o = (y * w + x) * CHANNELS;
            for c in 0..3 {
                data[o + c] = (bg[c] * (1.0 - alpha_head) + face[c] * alpha_head).clamp(0.0, 1.0);
            }
        }
    }
    data
}

pub fn render_frame(id: &IdentitySpec, state: &NuisanceState, h: usize, w: usize) -> Result<Frame> {
    check_dims(h, w)?;
    state.validate()?;
    Ok(Frame {
        height: h,
        width: w,
        channels: CHANNELS,
        data: render_pixels(id, state, h, w),
        meta: Some(FrameMeta {
            identity: id.clone(),
            nuisance: *state,
        }),
    })
}

/// Renders every frame of `nuis`; frame `t` depends only on `id` and `nuis[t]`.
pub fn render_video(id: &IdentitySpec, nuis: &NuisanceTrack, h: usize, w: usize) -> Result<VideoTensor> {
    check_dims(h, w)?;
    ensure!(!nuis.is_empty(), InvalidArgument, "nuisance track is empty");
    let mut data = Vec::with_capacity(nuis.len() * h * w * CHANNELS);
    for s in nuis.states() {
        data.extend(render_pixels(id, s, h, w));
    }
    let mut v = VideoTensor::new(nuis.len(), h, w, data)?;
    v.meta = Some(VideoMeta {
        identity: id.clone(),
        nuisance: nuis.clone(),
    });
    Ok(v)
}

/// Editable region of one frame: the head ellipse grown to `MASK_RHO`.
pub fn face_mask(state: &NuisanceState, h: usize, w: usize) -> Vec<f32> {
    let geo = HeadGeometry::new(state, h, w);
    let mut m = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            if geo.rho(y, x) <= MASK_RHO {
                m[y * w + x] = 1.0;
            }
        }
    }
    m
}

pub fn mask_video(nuis: &NuisanceTrack, h: usize, w: usize) -> Result<MaskVideo> {
    check_dims(h, w)?;
    let data = nuis.states().iter().flat_map(|s| face_mask(s, h, w)).collect();
    MaskVideo::new(nuis.len(), h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::nuisance::MotionProfile;

    #[test]
    fn shape_range_and_determinism() {
        let id = IdentitySpec::from_seed(7);
        let tr = NuisanceTrack::smooth(9, 3, MotionProfile::default()).unwrap();
        let a = render_video(&id, &tr, 32, 32).unwrap();
        assert_eq!(a.dims(), (9, 32, 32, 3));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = render_video(&id, &tr, 32, 32).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn different_identities_render_differently() {
        let tr = NuisanceTrack::smooth(9, 3, MotionProfile::default()).unwrap();
        let a = render_video(&IdentitySpec::from_seed(7), &tr, 32, 32).unwrap();
        let b = render_video(&IdentitySpec::from_seed(8), &tr, 32, 32).unwrap();
        for t in 0..9 {
            assert!(a.frame(t).dist_sq(&b.frame(t)).unwrap() > 0.0);
        }
    }

    #[test]
    fn frame_depends_only_on_its_own_state() {
        let id = IdentitySpec::from_seed(1);
        let tr = NuisanceTrack::smooth(5, 9, MotionProfile::default()).unwrap();
        let v = render_video(&id, &tr, 16, 16).unwrap();
        let single = render_frame(&id, tr.get(3).unwrap(), 16, 16).unwrap();
        assert_eq!(v.frame_data(3), &single.data[..]);
    }

    #[test]
    fn tiny_frames_are_rejected() {
        let tr = NuisanceTrack::neutral(2).unwrap();
        assert!(matches!(
            render_video(&IdentitySpec::from_seed(0), &tr, 7, 32),
            Err(crate::Error::Size(_))
        ));
    }

    #[test]
    fn mask_covers_the_head_and_not_the_corners() {
        let m = face_mask(&NuisanceState::NEUTRAL, 32, 32);
        assert_eq!(m[16 * 32 + 16], 1.0);
        assert_eq!(m[0], 0.0);
    }
}
