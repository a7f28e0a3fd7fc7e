use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

const NUISANCE_STREAM: u64 = 0x4E_0153;

pub const ILLUMINATION_RANGE: (f32, f32) = (0.3, 1.0);

/// Per-frame non-identity attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceState {
    /// In-plane head rotation, radians.
    pub pose: f32,
    /// Multiplicative light level in `[0.3, 1.0]`.
    pub illumination: f32,
    /// Mouth opening in `[-1, 1]`.
    pub expression: f32,
    /// Head offset from the frame centre, pixels `(x, y)`.
    pub translation: [f32; 2],
}

impl NuisanceState {
    pub const NEUTRAL: NuisanceState = NuisanceState {
        pose: 0.0,
        illumination: 1.0,
        expression: 0.0,
        translation: [0.0, 0.0],
    };

    pub fn validate(&self) -> Result<()> {
        ensure!(self.pose.is_finite(), InvalidArgument, "pose must be finite");
        ensure!(
            (ILLUMINATION_RANGE.0..=ILLUMINATION_RANGE.1).contains(&self.illumination),
            InvalidArgument,
            "illumination {} outside [0.3, 1.0]",
            self.illumination
        );
        ensure!(
            (-1.0..=1.0).contains(&self.expression),
            InvalidArgument,
            "expression {} outside [-1, 1]",
            self.expression
        );
        ensure!(
            self.translation.iter().all(|t| t.is_finite()),
            InvalidArgument,
            "translation must be finite"
        );
        Ok(())
    }
}

/// Amplitudes of the smooth random motion produced by [`NuisanceTrack::smooth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub pose_amp: f32,
    pub light_amp: f32,
    pub expr_amp: f32,
    pub shift_amp: f32,
    /// Oscillation speed in radians per frame.
    pub speed: f32,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            pose_amp: 0.45,
            light_amp: 0.3,
            expr_amp: 0.9,
            shift_amp: 2.0,
            speed: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceTrack {
    states: Vec<NuisanceState>,
}

impl NuisanceTrack {
    pub fn new(states: Vec<NuisanceState>) -> Result<Self> {
        ensure!(!states.is_empty(), InvalidArgument, "nuisance track must be non-empty");
        for s in &states {
            s.validate()?;
        }
        Ok(Self { states })
    }

    /// Neutral pose and full light on every frame.
    pub fn neutral(len: usize) -> Result<Self> {
        Self::new(vec![NuisanceState::NEUTRAL; len])
    }

    /// Smooth sum-of-sinusoids motion, deterministic in `seed`.
    pub fn smooth(len: usize, seed: u64, profile: MotionProfile) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NUISANCE_STREAM);
        let mut phase = || rng.random_range(0.0f32..std::f32::consts::TAU);
        let (p1, p2, p3, p4, p5) = (phase(), phase(), phase(), phase(), phase());
        let w = profile.speed;
        let mid = 0.5 * (ILLUMINATION_RANGE.0 + ILLUMINATION_RANGE.1);
        let half = 0.5 * (ILLUMINATION_RANGE.1 - ILLUMINATION_RANGE.0);
        let states = (0..len)
            .map(|t| {
                let t = t as f32;
                NuisanceState {
                    pose: profile.pose_amp * (w * t + p1).sin(),
                    illumination: (mid + profile.light_amp.min(half) * (0.7 * w * t + p2).sin())
                        .clamp(ILLUMINATION_RANGE.0, ILLUMINATION_RANGE.1),
                    expression: (profile.expr_amp * (1.3 * w * t + p3).sin()).clamp(-1.0, 1.0),
                    translation: [
                        profile.shift_amp * (0.8 * w * t + p4).sin(),
                        profile.shift_amp * (0.6 * w * t + p5).cos(),
                    ],
                }
            })
            .collect();
        Self::new(states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&NuisanceState> {
        self.states.get(t)
    }

    pub fn states(&self) -> &[NuisanceState] {
        &self.states
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let states = indices
            .iter()
            .map(|&i| {
                self.states
                    .get(i)
                    .copied()
                    .ok_or_else(|| crate::Error::InvalidArgument(format!("frame {i} outside track")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states)
    }
}
