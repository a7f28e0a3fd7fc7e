//! Face detection, square crops and feathered paste-back.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::synthkit::{background, Frame, HeadGeometry, MaskVideo, VideoTensor, CHANNELS, MASK_RHO};

/// Frames averaged by the temporal box smoother.
pub const SMOOTHING: usize = 5;

/// Axis-aligned box `[x0, y0, x1, y1]` in pixel coordinates.
pub type BoxF = [f32; 4];

/// Integer crop box of one frame. `feather` is the blend band in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub feather: f32,
}

pub trait Detector {
    fn detect(&self, frame: &Frame) -> Option<BoxF>;
}

/// Reads the analytic head outline from renderer metadata.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetadataDetector;

impl Detector for MetadataDetector {
    fn detect(&self, f: &Frame) -> Option<BoxF> {
        let m = f.meta.as_ref()?;
        Some(HeadGeometry::new(&m.nuisance, f.height, f.width).extent(MASK_RHO))
    }
}

/// Bounding box of pixels that differ from the known background.
#[derive(Debug, Clone, Copy)]
pub struct PixelDetector {
    pub threshold: f32,
}

impl Default for PixelDetector {
    fn default() -> Self {
        Self { threshold: 0.05 }
    }
}

impl Detector for PixelDetector {
    fn detect(&self, f: &Frame) -> Option<BoxF> {
        let mut b: Option<BoxF> = None;
        for y in 0..f.height {
            for x in 0..f.width {
                let bg = background(y, x, f.height, f.width);
                let d: f32 = f.pixel(y, x).iter().zip(bg).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt();
                if d > self.threshold {
                    let (x0, y0, x1, y1) = (x as f32, y as f32, x as f32 + 1.0, y as f32 + 1.0);
                    b = Some(match b {
                        None => [x0, y0, x1, y1],
                        Some(c) => [c[0].min(x0), c[1].min(y0), c[2].max(x1), c[3].max(y1)],
                    });
                }
            }
        }
        b
    }
}

/// Metadata when present, pixels otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoDetector;

impl Detector for AutoDetector {
    fn detect(&self, f: &Frame) -> Option<BoxF> {
        MetadataDetector.detect(f).or_else(|| PixelDetector::default().detect(f))
    }
}

/// Centred moving average of per-frame boxes over [`SMOOTHING`] frames,
/// truncated at the ends.
pub fn smooth_boxes(boxes: &[BoxF]) -> Vec<BoxF> {
    let r = SMOOTHING / 2;
    (0..boxes.len())
        .map(|t| {
            let lo = t.saturating_sub(r);
            let hi = (t + r + 1).min(boxes.len());
            let n = (hi - lo) as f32;
            let mut s = [0f32; 4];
            for b in &boxes[lo..hi] {
                for k in 0..4 {
                    s[k] += b[k];
                }
            }
            s.map(|v| v / n)
        })
        .collect()
}

/// One smoothed box per frame. Frames without a detection borrow the
/// nearest detected frame; a video with none falls back to the full frame.
pub fn detect_regions(video: &VideoTensor, detector: &dyn Detector) -> Result<Vec<BoxF>> {
    ensure!(!video.is_empty(), InvalidArgument, "cannot detect faces in an empty video");
    let raw: Vec<Option<BoxF>> = video.frames().map(|f| detector.detect(&f)).collect();
    let found: Vec<usize> = (0..raw.len()).filter(|&t| raw[t].is_some()).collect();
    if found.is_empty() {
        log::warn!("no face found; using the full frame");
        let full = [0.0, 0.0, video.width() as f32, video.height() as f32];
        return Ok(vec![full; video.len()]);
    }
    let filled: Vec<BoxF> = (0..raw.len())
        .map(|t| {
            raw[t].unwrap_or_else(|| {
                let near = *found.iter().min_by_key(|&&k| k.abs_diff(t)).expect("non-empty");
                raw[near].expect("detected")
            })
        })
        .collect();
    Ok(smooth_boxes(&filled))
}

/// Inflates `b` by `inflate` (fractional), makes it square, and fits it
/// inside an `h × w` frame.
pub fn crop_region(b: BoxF, inflate: f32, h: usize, w: usize, feather: f32) -> Region {
    let cx = (b[0] + b[2]) / 2.0;
    let cy = (b[1] + b[3]) / 2.0;
    let side = ((b[2] - b[0]).max(b[3] - b[1]) * (1.0 + inflate)).round() as usize;
    let side = side.clamp(1, h.min(w));
    let place = |c: f32, len: usize| -> usize {
        let start = (c - side as f32 / 2.0).round().max(0.0) as usize;
        start.min(len - side)
    };
    Region {
        x: place(cx, w),
        y: place(cy, h),
        w: side,
        h: side,
        feather,
    }
}

/// Bilinear resample of the `(x, y, w, h)` window of `f` to `out_h × out_w`,
/// sampling at pixel centres and clamping at the frame edge.
pub fn resample(f: &Frame, x: f32, y: f32, w: f32, h: f32, out_h: usize, out_w: usize) -> Frame {
    let c = f.channels;
    let mut data = vec![0f32; out_h * out_w * c];
    let sx = w / out_w as f32;
    let sy = h / out_h as f32;
    for i in 0..out_h {
        let fy = (y + (i as f32 + 0.5) * sy - 0.5).clamp(0.0, (f.height - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(f.height - 1);
        let ay = fy - y0 as f32;
        for j in 0..out_w {
            let fx = (x + (j as f32 + 0.5) * sx - 0.5).clamp(0.0, (f.width - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(f.width - 1);
            let ax = fx - x0 as f32;
            let o = (i * out_w + j) * c;
            for k in 0..c {
                let p = |yy: usize, xx: usize| f.data[(yy * f.width + xx) * c + k];
                let top = p(y0, x0) * (1.0 - ax) + p(y0, x1) * ax;
                let bot = p(y1, x0) * (1.0 - ax) + p(y1, x1) * ax;
                data[o + k] = top * (1.0 - ay) + bot * ay;
            }
        }
    }
    Frame {
        height: out_h,
        width: out_w,
        channels: c,
        data,
        meta: None,
    }
}

/// Crops every frame to its region and resamples to `out_h × out_w`.
pub fn crop_video(video: &VideoTensor, regions: &[Region], out_h: usize, out_w: usize) -> Result<VideoTensor> {
    ensure!(regions.len() == video.len(), Shape, "{} regions for {} frames", regions.len(), video.len());
    let frames: Vec<Frame> = video
        .frames()
        .zip(regions)
        .map(|(f, r)| resample(&f, r.x as f32, r.y as f32, r.w as f32, r.h as f32, out_h, out_w))
        .collect();
    let mut v = VideoTensor::from_frames(&frames)?;
    v.fps = video.fps;
    Ok(v)
}

/// Crops a mask the same way; a crop pixel is editable when its bilinear
/// coverage reaches one half.
pub fn crop_mask(mask: &MaskVideo, regions: &[Region], out_h: usize, out_w: usize) -> Result<MaskVideo> {
    ensure!(regions.len() == mask.len(), Shape, "{} regions for {} mask frames", regions.len(), mask.len());
    let mut data = Vec::with_capacity(mask.len() * out_h * out_w);
    for (t, r) in regions.iter().enumerate() {
        let f = Frame::new(mask.height(), mask.width(), 1, mask.frame(t).to_vec())?;
        let c = resample(&f, r.x as f32, r.y as f32, r.w as f32, r.h as f32, out_h, out_w);
        data.extend(c.data.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }));
    }
    MaskVideo::new(mask.len(), out_h, out_w, data)
}

/// Grows the mask by `r` pixels (Chebyshev distance).
pub fn dilate(mask: &MaskVideo, r: usize) -> Result<MaskVideo> {
    let (h, w) = (mask.height(), mask.width());
    let mut data = vec![0f32; mask.len() * h * w];
    for t in 0..mask.len() {
        for y in 0..h {
            for x in 0..w {
                let hit = (y.saturating_sub(r)..=(y + r).min(h - 1))
                    .any(|yy| (x.saturating_sub(r)..=(x + r).min(w - 1)).any(|xx| mask.at(t, yy, xx)));
                if hit {
                    data[(t * h + y) * w + x] = 1.0;
                }
            }
        }
    }
    MaskVideo::new(mask.len(), h, w, data)
}

/// Blend weight at `(y, x)` of a `h × w` crop: ramps linearly from the crop
/// border to 1 at `feather` pixels in. The outermost ring is at distance 1.
pub fn feather_weight(y: usize, x: usize, h: usize, w: usize, feather: f32) -> f32 {
    if feather <= 0.0 {
        return 1.0;
    }
    let d = 1 + y.min(h - 1 - y).min(x).min(w - 1 - x);
    (d as f32 / feather).min(1.0)
}

/// Writes each crop back into its region. Outside the mask the original
/// pixel is kept exactly; inside, the crop is blended in with the
/// feather weight.
pub fn paste_back(
    original: &VideoTensor,
    crops: &[Frame],
    regions: &[Region],
    mask: &MaskVideo,
) -> Result<VideoTensor> {
    let (t, h, w, _) = original.dims();
    ensure!(
        crops.len() == t && regions.len() == t,
        Shape,
        "{} crops / {} regions for {t} frames",
        crops.len(),
        regions.len()
    );
    ensure!(
        mask.len() == t && mask.height() == h && mask.width() == w,
        Shape,
        "mask does not match the original video"
    );
    let mut data = original.data().to_vec();
    for (k, (c, r)) in crops.iter().zip(regions).enumerate() {
        if c.height != r.h || c.width != r.w || c.channels != CHANNELS {
            return Err(Error::Shape(format!(
                "frame {k}: crop {}x{} does not match region {}x{}",
                c.height, c.width, r.h, r.w
            )));
        }
        ensure!(r.x + r.w <= w && r.y + r.h <= h, Shape, "frame {k}: region outside the frame");
        for i in 0..r.h {
            for j in 0..r.w {
                let (y, x) = (r.y + i, r.x + j);
                if !mask.at(k, y, x) {
                    continue;
                }
                let a = feather_weight(i, j, r.h, r.w, r.feather);
                let o = ((k * h + y) * w + x) * CHANNELS;
                let s = c.pixel(i, j);
                for ch in 0..CHANNELS {
                    data[o + ch] = if a >= 1.0 {
                        s[ch]
                    } else {
                        data[o + ch] * (1.0 - a) + s[ch] * a
                    };
                }
            }
        }
    }
    let mut v = VideoTensor::new(t, h, w, data)?;
    v.fps = original.fps;
    Ok(v)
}
