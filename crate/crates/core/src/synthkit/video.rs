use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::identity::IdentitySpec;
use super::nuisance::{NuisanceState, NuisanceTrack};
use crate::error::{ensure, Error, Result};

pub const CHANNELS: usize = 3;

/// Ground truth attached to rendered frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub identity: IdentitySpec,
    pub nuisance: NuisanceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub identity: IdentitySpec,
    pub nuisance: NuisanceTrack,
}

/// One `H × W × C` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub meta: Option<FrameMeta>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == height * width * channels,
            Shape,
            "frame buffer has {} values, expected {height}x{width}x{channels}",
            data.len()
        );
        Ok(Self {
            height,
            width,
            channels,
            data,
            meta: None,
        })
    }

    pub fn black(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            channels: CHANNELS,
            data: vec![0.0; height * width * CHANNELS],
            meta: None,
        }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn without_meta(mut self) -> Self {
        self.meta = None;
        self
    }

    /// Squared L2 distance between two frames of equal dims.
    pub fn dist_sq(&self, other: &Frame) -> Result<f64> {
        ensure!(self.dims() == other.dims(), Shape, "frame dims {:?} vs {:?}", self.dims(), other.dims());
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum())
    }
}

/// `T × H × W × 3` frame sequence, row-major `(t, h, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    pub fps: Ratio<u32>,
    pub meta: Option<VideoMeta>,
}

pub fn default_fps() -> Ratio<u32> {
    Ratio::new(16, 1)
}

impl VideoTensor {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(frames >= 1, Size, "video needs at least one frame");
        ensure!(
            data.len() == frames * height * width * CHANNELS,
            Shape,
            "video buffer has {} values, expected {frames}x{height}x{width}x{CHANNELS}",
            data.len()
        );
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
            fps: default_fps(),
            meta: None,
        })
    }

    /// Stacks frames; metadata survives only if every frame carries it.
    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Size("video needs at least one frame".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(frames.len() * h * w * CHANNELS);
        for f in frames {
            ensure!(
                f.dims() == (h, w, CHANNELS),
                Shape,
                "frame dims {:?} differ from {:?}",
                f.dims(),
                (h, w, CHANNELS)
            );
            data.extend_from_slice(&f.data);
        }
        let mut v = Self::new(frames.len(), h, w, data)?;
        let metas: Option<Vec<&FrameMeta>> = frames.iter().map(|f| f.meta.as_ref()).collect();
        if let Some(metas) = metas {
            let identity = metas[0].identity.clone();
            if metas.iter().all(|m| m.identity == identity) {
                let track = NuisanceTrack::new(metas.iter().map(|m| m.nuisance).collect())?;
                v.meta = Some(VideoMeta {
                    identity,
                    nuisance: track,
                });
            }
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    /// `(T, H, W, C)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.height, self.width, CHANNELS)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub fn frame_data(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> Frame {
        let meta = self.meta.as_ref().and_then(|m| {
            m.nuisance.get(t).map(|n| FrameMeta {
                identity: m.identity.clone(),
                nuisance: *n,
            })
        });
        Frame {
            height: self.height,
            width: self.width,
            channels: CHANNELS,
            data: self.frame_data(t).to_vec(),
            meta,
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frames).map(|t| self.frame(t))
    }

    /// Frames at the given indices, in order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<VideoTensor> {
        for &i in indices {
            ensure!(i < self.frames, InvalidArgument, "frame {i} outside video of {}", self.frames);
        }
        let frames: Vec<Frame> = indices.iter().map(|&i| self.frame(i)).collect();
        let mut v = Self::from_frames(&frames)?;
        v.fps = self.fps;
        Ok(v)
    }

    pub fn without_meta(mut self) -> Self {
        self.meta = None;
        self
    }
}

/// Binary editable-region masks, `T × H × W`, values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVideo {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl MaskVideo {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(frames >= 1, Size, "mask video needs at least one frame");
        ensure!(
            data.len() == frames * height * width,
            Shape,
            "mask buffer has {} values, expected {frames}x{height}x{width}",
            data.len()
        );
        ensure!(
            data.iter().all(|&v| v == 0.0 || v == 1.0),
            InvalidArgument,
            "mask values must be 0 or 1"
        );
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, value: bool) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![if value { 1.0 } else { 0.0 }; frames * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn at(&self, t: usize, y: usize, x: usize) -> bool {
        self.data[(t * self.height + y) * self.width + x] != 0.0
    }

    pub fn select(&self, indices: &[usize]) -> Result<MaskVideo> {
        let n = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            ensure!(i < self.frames, InvalidArgument, "mask frame {i} outside {}", self.frames);
            data.extend_from_slice(self.frame(i));
        }
        MaskVideo::new(indices.len(), self.height, self.width, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values_and_empty_videos() {
        assert!(VideoTensor::new(1, 1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(VideoTensor::new(0, 1, 1, vec![]).is_err());
        assert!(VideoTensor::new(1, 2, 1, vec![0.5; 3]).is_err());
    }

    #[test]
    fn select_reorders_frames() {
        let data: Vec<f32> = (0..3).flat_map(|t| vec![t as f32 / 4.0; 3]).collect();
        let v = VideoTensor::new(3, 1, 1, data).unwrap();
        let s = v.select(&[2, 0, 2]).unwrap();
        assert_eq!(s.frame_data(0), &[0.5; 3]);
        assert_eq!(s.frame_data(1), &[0.0; 3]);
        assert!(v.select(&[3]).is_err());
    }
}
