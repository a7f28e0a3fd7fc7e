use serde::{Deserialize, Serialize};

use super::keyframes::validate_indices;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRole {
    Keyframe,
    /// Output frame of the chunk that ended here.
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndRole {
    Keyframe,
    /// Frame produced by an earlier skim pass, used as a keyframe.
    Anchor,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
}

/// How chunks shorter than the window are run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// Run at the chunk's own length.
    #[default]
    Exact,
    /// Stretch the chunk to the full window by frame repetition and sample
    /// the result back.
    Interpolate,
}

impl std::str::FromStr for Fill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "interpolate" => Ok(Self::Interpolate),
            _ => Err(Error::Config(format!("unknown fill `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxConfig {
    pub fill: Fill,
    /// Allow strided skim passes for gaps longer than the window.
    pub frame_skip: bool,
    /// Generate every chunk after the first back to front.
    pub reverse: bool,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            fill: Fill::Exact,
            frame_skip: true,
            reverse: false,
        }
    }
}

/// One generation call. Indices are zero-based and inclusive; the chunk
/// covers `start, start+stride, …` up to `end`, whose final step may be
/// shorter than `stride`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub stride: usize,
    pub pass: usize,
    pub start_role: StartRole,
    pub end_role: EndRole,
    pub direction: Direction,
    pub fill: Fill,
}

impl Chunk {
    /// Frame indices in time order.
    pub fn positions(&self) -> Vec<usize> {
        let mut p: Vec<usize> = (self.start..self.end).step_by(self.stride).collect();
        p.push(self.end);
        p
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).div_ceil(self.stride) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frames the model is run on.
    pub fn run_len(&self, window: usize) -> usize {
        match self.fill {
            Fill::Exact => self.len(),
            Fill::Interpolate => window.max(self.len()),
        }
    }

    pub fn is_skim(&self) -> bool {
        self.stride > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub frames: usize,
    pub keyframes: Vec<usize>,
    pub window: usize,
    pub aux: AuxConfig,
    pub chunks: Vec<Chunk>,
}

/// Splits `[0, frames)` into chunks between consecutive keyframes, adding
/// strided skim passes plus refinement passes for gaps beyond the window.
pub fn plan_chunks(frames: usize, keyframes: &[usize], window: usize, aux: AuxConfig) -> Result<ChunkPlan> {
    ensure!(window >= 3, InvalidArgument, "window must be at least 3 frames, got {window}");
    validate_indices(keyframes, frames)?;
    let mut chunks = Vec::new();
    for pair in keyframes.windows(2) {
        let gap = pair[1] - pair[0];
        ensure!(
            gap < window || aux.frame_skip,
            InvalidArgument,
            "keyframe gap {gap} ({}..{}) exceeds window {window} and frame skipping is disabled",
            pair[0],
            pair[1]
        );
        push_gap(&mut chunks, pair[0], pair[1], EndRole::Keyframe, 0, window, aux);
    }
    for (i, c) in chunks.iter_mut().enumerate() {
        c.index = i;
        if i > 0 {
            c.start_role = StartRole::Propagated;
            if aux.reverse {
                c.direction = Direction::Reverse;
            }
        }
    }
    let plan = ChunkPlan {
        frames,
        keyframes: keyframes.to_vec(),
        window,
        aux,
        chunks,
    };
    plan.validate()?;
    Ok(plan)
}

fn push_gap(out: &mut Vec<Chunk>, a: usize, b: usize, end_role: EndRole, pass: usize, window: usize, aux: AuxConfig) {
    let gap = b - a;
    let stride = if gap < window { 1 } else { gap.div_ceil(window - 1) };
    let chunk = Chunk {
        index: 0,
        start: a,
        end: b,
        stride,
        pass,
        start_role: StartRole::Keyframe,
        end_role,
        direction: Direction::Forward,
        fill: aux.fill,
    };
    let positions = chunk.positions();
    out.push(chunk);
    if stride > 1 {
        let last = positions.len() - 2;
        for (i, w) in positions.windows(2).enumerate() {
            let role = if i == last { end_role } else { EndRole::Anchor };
            push_gap(out, w[0], w[1], role, pass + 1, window, aux);
        }
    }
}

impl ChunkPlan {
    /// Chunks that produce consecutive frames, in time order.
    pub fn leaf_chain(&self) -> Vec<&Chunk> {
        self.chunks.iter().filter(|c| c.stride == 1).collect()
    }

    pub fn passes(&self) -> usize {
        self.chunks.iter().map(|c| c.pass + 1).max().unwrap_or(0)
    }

    /// Checks coverage, single-frame overlap, window bounds, guidance roles
    /// and that every guidance frame exists before its chunk runs.
    pub fn validate(&self) -> Result<()> {
        validate_indices(&self.keyframes, self.frames)?;
        ensure!(!self.chunks.is_empty(), InvalidArgument, "plan has no chunks");
        let mut written = vec![false; self.frames];
        for (i, c) in self.chunks.iter().enumerate() {
            ensure!(c.index == i, InvalidArgument, "chunk {i} carries index {}", c.index);
            ensure!(
                c.start < c.end && c.end < self.frames && c.stride >= 1,
                InvalidArgument,
                "chunk {i} has bad range {}..={} stride {}",
                c.start,
                c.end,
                c.stride
            );
            ensure!(c.len() <= self.window, InvalidArgument, "chunk {i} has {} frames, window is {}", c.len(), self.window);
            let expected = if i == 0 { StartRole::Keyframe } else { StartRole::Propagated };
            ensure!(c.start_role == expected, InvalidArgument, "chunk {i} start role {:?}", c.start_role);
            if i == 0 {
                ensure!(c.start == 0, InvalidArgument, "first chunk must start at frame 0");
            } else {
                ensure!(written[c.start], InvalidArgument, "chunk {i} starts at frame {} before it exists", c.start);
            }
            match c.end_role {
                EndRole::Keyframe => ensure!(
                    self.keyframes.binary_search(&c.end).is_ok(),
                    InvalidArgument,
                    "chunk {i} ends at non-keyframe {}",
                    c.end
                ),
                EndRole::Anchor => {
                    ensure!(written[c.end], InvalidArgument, "chunk {i} anchor {} does not exist yet", c.end)
                }
            }
            for p in c.positions() {
                written[p] = true;
            }
        }
        ensure!(written.iter().all(|&w| w), InvalidArgument, "plan leaves frames uncovered");
        let chain = self.leaf_chain();
        ensure!(chain[0].start == 0, InvalidArgument, "chain does not start at frame 0");
        ensure!(
            chain.last().unwrap().end == self.frames - 1,
            InvalidArgument,
            "chain does not reach the last frame"
        );
        for w in chain.windows(2) {
            ensure!(
                w[0].end == w[1].start,
                InvalidArgument,
                "chunks {} and {} do not share a boundary frame",
                w[0].index,
                w[1].index
            );
        }
        Ok(())
    }

    pub fn labor_reduction(&self) -> LaborReduction {
        LaborReduction {
            overall: self.frames as f64 / self.keyframes.len() as f64,
            per_chunk: self.window as f64 / 2.0,
        }
    }
}

/// Frames a per-frame editor would touch, per manually edited keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaborReduction {
    /// `T / |K|`.
    pub overall: f64,
    /// Two keyframes per window-length chunk.
    pub per_chunk: f64,
}

pub fn labor_reduction(plan: &ChunkPlan) -> LaborReduction {
    plan.labor_reduction()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(p: &ChunkPlan) -> Vec<(usize, usize, usize)> {
        p.chunks.iter().map(|c| (c.start, c.end, c.stride)).collect()
    }

    #[test]
    fn exact_fits() {
        let p = plan_chunks(161, &[0, 80, 160], 81, AuxConfig::default()).unwrap();
        assert_eq!(spans(&p), [(0, 80, 1), (80, 160, 1)]);
        let p = plan_chunks(9, &[0, 4, 8], 5, AuxConfig::default()).unwrap();
        assert_eq!(spans(&p), [(0, 4, 1), (4, 8, 1)]);
        assert_eq!(p.chunks[1].start_role, StartRole::Propagated);
        assert_eq!(p.passes(), 1);
    }

    #[test]
    fn long_gap_gets_a_skim_pass() {
        let p = plan_chunks(241, &[0, 240], 81, AuxConfig::default()).unwrap();
        let skim = &p.chunks[0];
        assert_eq!((skim.stride, skim.len(), skim.pass), (3, 81, 0));
        let refine: Vec<_> = p.chunks[1..].iter().collect();
        assert_eq!(refine.len(), 80);
        assert!(refine.iter().all(|c| c.pass == 1 && c.stride == 1 && c.len() == 4));
        assert_eq!(refine[0].end_role, EndRole::Anchor);
        assert_eq!(refine[79].end_role, EndRole::Keyframe);

        let no_skip = AuxConfig {
            frame_skip: false,
            ..AuxConfig::default()
        };
        assert!(plan_chunks(241, &[0, 240], 81, no_skip).is_err());
    }

    #[test]
    fn labor_figures() {
        let p = plan_chunks(81, &[0, 80], 81, AuxConfig::default()).unwrap();
        assert_eq!(p.labor_reduction().per_chunk, 40.5);
        let p = plan_chunks(161, &[0, 80, 160], 81, AuxConfig::default()).unwrap();
        assert!((p.labor_reduction().overall - 161.0 / 3.0).abs() < 1e-12);
        let all: Vec<usize> = (0..9).collect();
        let p = plan_chunks(9, &all, 9, AuxConfig::default()).unwrap();
        assert_eq!(p.labor_reduction().overall, 1.0);
    }

    #[test]
    fn reverse_flags_later_chunks() {
        let aux = AuxConfig {
            reverse: true,
            ..AuxConfig::default()
        };
        let p = plan_chunks(17, &[0, 8, 16], 9, aux).unwrap();
        assert_eq!(p.chunks[0].direction, Direction::Forward);
        assert_eq!(p.chunks[1].direction, Direction::Reverse);
    }
}
