//! FVT1 video files and their JSON metadata sidecar.
//!
//! Layout: magic `FVT1`, then `T, H, W, C` as little-endian `u32`, then
//! `T·H·W·C` little-endian `f32` in `(t, h, w, c)` order.
//!
//! The sidecar lives at `<path>.meta.json` and holds:
//!
//! | key        | value                                           |
//! |------------|-------------------------------------------------|
//! | `frames`   | `T`                                             |
//! | `height`   | `H`                                             |
//! | `width`    | `W`                                             |
//! | `channels` | `C` (3 for videos)                              |
//! | `fps`      | frame rate as `"num/den"`                       |
//! | `identity` | `IdentitySpec` or `null`                        |
//! | `nuisance` | per-frame `NuisanceState` list or `null`        |
//!
//! Mask videos use the same layout with `C = 1` and no sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::identity::IdentitySpec;
use super::nuisance::{NuisanceState, NuisanceTrack};
use super::video::{MaskVideo, VideoMeta, VideoTensor, CHANNELS};
use crate::error::{ensure, Error, Result};

pub const MAGIC: &[u8; 4] = b"FVT1";
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn encode_fvt(v: &VideoTensor) -> Vec<u8> {
    encode_raw(v.dims(), v.data())
}

fn encode_raw((t, h, w, c): (usize, usize, usize, usize), data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(MAGIC);
    for d in [t, h, w, c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_fvt(bytes: &[u8]) -> Result<VideoTensor> {
    let ((t, h, w, c), data) = decode_raw(bytes)?;
    ensure!(c == CHANNELS, Format, "expected {CHANNELS} channels, found {c}");
    VideoTensor::new(t, h, w, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_mask_fvt(m: &MaskVideo) -> Vec<u8> {
    encode_raw((m.len(), m.height(), m.width(), 1), m.data())
}

pub fn decode_mask_fvt(bytes: &[u8]) -> Result<MaskVideo> {
    let ((t, h, w, c), data) = decode_raw(bytes)?;
    ensure!(c == 1, Format, "mask files have 1 channel, found {c}");
    MaskVideo::new(t, h, w, data).map_err(|e| Error::Format(e.to_string()))
}

type Dims = (usize, usize, usize, usize);

fn decode_raw(bytes: &[u8]) -> Result<(Dims, Vec<f32>)> {
    ensure!(bytes.len() >= HEADER_LEN, Format, "FVT1 header truncated");
    ensure!(&bytes[..4] == MAGIC, Format, "bad magic, expected FVT1");
    let dim = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
    };
    let (t, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
    let count = t
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::Format("FVT1 dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    ensure!(
        payload.len() == count * 4,
        Format,
        "payload has {} bytes, header implies {}",
        payload.len(),
        count * 4
    );
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(((t, h, w, c), data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub fps: String,
    pub identity: Option<IdentitySpec>,
    pub nuisance: Option<Vec<NuisanceState>>,
}

impl Sidecar {
    pub fn of(v: &VideoTensor) -> Self {
        let (t, h, w, c) = v.dims();
        Self {
            frames: t,
            height: h,
            width: w,
            channels: c,
            fps: format!("{}/{}", v.fps.numer(), v.fps.denom()),
            identity: v.meta.as_ref().map(|m| m.identity.clone()),
            nuisance: v.meta.as_ref().map(|m| m.nuisance.states().to_vec()),
        }
    }

    fn parse_fps(&self) -> Result<Ratio<u32>> {
        let (n, d) = self
            .fps
            .split_once('/')
            .ok_or_else(|| Error::Format(format!("fps `{}` is not num/den", self.fps)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| Error::Format(format!("fps `{}` is not num/den", self.fps)))
        };
        let (n, d) = (parse(n)?, parse(d)?);
        ensure!(d != 0 && n != 0, Format, "fps `{}` must be positive", self.fps);
        Ok(Ratio::new(n, d))
    }

    /// Attaches fps and metadata to a decoded video after checking dims agree.
    pub fn apply(&self, v: &mut VideoTensor) -> Result<()> {
        ensure!(
            (self.frames, self.height, self.width, self.channels) == v.dims(),
            Format,
            "sidecar dims do not match the video"
        );
        v.fps = self.parse_fps()?;
        v.meta = match (&self.identity, &self.nuisance) {
            (Some(id), Some(n)) => {
                ensure!(n.len() == self.frames, Format, "sidecar nuisance length mismatch");
                Some(VideoMeta {
                    identity: id.clone(),
                    nuisance: NuisanceTrack::new(n.clone())?,
                })
            }
            _ => None,
        };
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the video and its sidecar.
pub fn write_fvt(path: &Path, v: &VideoTensor) -> Result<()> {
    fs::write(path, encode_fvt(v)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&Sidecar::of(v))?;
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

/// Reads a video; the sidecar is optional.
pub fn read_fvt(path: &Path) -> Result<VideoTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut v = decode_fvt(&bytes)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sc: Sidecar = serde_json::from_str(&text)?;
        sc.apply(&mut v)?;
    }
    Ok(v)
}

pub fn write_mask(path: &Path, m: &MaskVideo) -> Result<()> {
    fs::write(path, encode_mask_fvt(m)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<MaskVideo> {
    decode_mask_fvt(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::nuisance::MotionProfile;
    use crate::synthkit::render::render_video;

    #[test]
    fn header_layout() {
        let v = VideoTensor::new(2, 8, 8, vec![0.25; 2 * 8 * 8 * 3]).unwrap();
        let b = encode_fvt(&v);
        assert_eq!(&b[..4], b"FVT1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[16..20], &3u32.to_le_bytes());
        assert_eq!(&b[20..24], &0.25f32.to_le_bytes());
        assert_eq!(b.len(), 20 + 2 * 8 * 8 * 3 * 4);
    }

    #[test]
    fn file_with_sidecar_restores_everything() {
        let dir = tempfile::tempdir().unwrap();
        let tr = NuisanceTrack::smooth(3, 2, MotionProfile::default()).unwrap();
        let mut v = render_video(&IdentitySpec::from_seed(4), &tr, 16, 16).unwrap();
        v.fps = Ratio::new(30000, 1001);
        let p = dir.path().join("clip.fvt");
        write_fvt(&p, &v).unwrap();
        assert!(sidecar_path(&p).exists());
        let back = read_fvt(&p).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(decode_fvt(b"FVT").is_err());
        let v = VideoTensor::new(1, 8, 8, vec![0.0; 192]).unwrap();
        let mut b = encode_fvt(&v);
        b[0] = b'X';
        assert!(decode_fvt(&b).is_err());
        let mut b = encode_fvt(&v);
        b.pop();
        assert!(decode_fvt(&b).is_err());
    }
}
