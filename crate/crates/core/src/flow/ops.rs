//! Rectified-flow interpolant, velocity target, timestep sampling, loss and
//! Euler integration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::{Mat, Scalar};

/// `x_t = t·x1 + (1 − t)·x0`. The endpoints return copies of `x0` / `x1`
/// exactly.
pub fn interpolate<S: Scalar>(x0: &Mat<S>, x1: &Mat<S>, t: S) -> Result<Mat<S>> {
    ensure!(
        x0.shape() == x1.shape(),
        Shape,
        "interpolate {:?} with {:?}",
        x0.shape(),
        x1.shape()
    );
    ensure!(t >= S::zero() && t <= S::one(), InvalidArgument, "t = {t} outside [0, 1]");
    if t == S::zero() {
        return Ok(x0.clone());
    }
    if t == S::one() {
        return Ok(x1.clone());
    }
    let s = S::one() - t;
    x0.zip_map(x1, |a, b| t * b + s * a)
}

/// `v_t = x1 − x0`.
pub fn velocity_target<S: Scalar>(x0: &Mat<S>, x1: &Mat<S>) -> Result<Mat<S>> {
    x1.sub(x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum TimestepDist {
    #[default]
    Uniform,
    LogitNormal { mean: f64, std: f64 },
}


impl TimestepDist {
    /// Parses `uniform` or `logit_normal` / `logit_normal(mean,std)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(Self::Uniform);
        }
        if s == "logit_normal" {
            return Ok(Self::LogitNormal { mean: 0.0, std: 1.0 });
        }
        if let Some(args) = s.strip_prefix("logit_normal(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if let [m, sd] = parts[..] {
                let mean = m.parse().map_err(|_| Error::Config(format!("bad mean in `{s}`")))?;
                let std: f64 = sd.parse().map_err(|_| Error::Config(format!("bad std in `{s}`")))?;
                ensure!(std > 0.0, Config, "logit-normal std must be positive");
                return Ok(Self::LogitNormal { mean, std });
            }
        }
        Err(Error::Config(format!("unknown timestep distribution `{s}`")))
    }

    /// Draws `t ∈ (0, 1)`.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        const EDGE: f64 = 1e-6;
        match *self {
            Self::Uniform => loop {
                let t: f64 = rng.random();
                if t > 0.0 {
                    return t;
                }
            },
            Self::LogitNormal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                (1.0 / (1.0 + (-(mean + std * z)).exp())).clamp(EDGE, 1.0 - EDGE)
            }
        }
    }
}

pub fn sample_timestep(rng: &mut impl Rng, dist: &TimestepDist) -> f64 {
    dist.sample(rng)
}

/// One training tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct RfSample<S> {
    pub x0: Mat<S>,
    pub x1: Mat<S>,
    pub t: S,
    pub xt: Mat<S>,
    pub vt: Mat<S>,
}

impl<S: Scalar> RfSample<S> {
    pub fn new(x0: Mat<S>, x1: Mat<S>, t: S) -> Result<Self> {
        let xt = interpolate(&x0, &x1, t)?;
        let vt = velocity_target(&x0, &x1)?;
        Ok(Self { x0, x1, t, xt, vt })
    }

    /// Gaussian `x0` and a timestep drawn from `dist`.
    pub fn draw(x1: Mat<S>, dist: &TimestepDist, rng: &mut impl Rng) -> Result<Self> {
        let x0 = Mat::from_fn(x1.rows(), x1.cols(), |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            S::lit(z)
        });
        let t = S::lit(dist.sample(rng));
        Self::new(x0, x1, t)
    }
}

/// Mean over all elements of `(u(x_t, t) − v_t)²`.
pub fn rf_loss<S: Scalar>(
    mut velocity: impl FnMut(&Mat<S>, S) -> Result<Mat<S>>,
    xt: &Mat<S>,
    t: S,
    vt: &Mat<S>,
) -> Result<S> {
    let pred = velocity(xt, t)?;
    ensure!(
        pred.shape() == vt.shape(),
        Shape,
        "prediction {:?} vs target {:?}",
        pred.shape(),
        vt.shape()
    );
    let n = S::lit(pred.len().max(1) as f64);
    Ok(pred.sub(vt)?.sum_sq() / n)
}

/// Integrates `dx/dt = v(x, t)` from `t = 0` to `1` with `n_steps` uniform
/// Euler steps.
pub fn euler_sample<S: Scalar>(
    mut velocity: impl FnMut(&Mat<S>, S) -> Result<Mat<S>>,
    x0: &Mat<S>,
    n_steps: usize,
) -> Result<Mat<S>> {
    ensure!(n_steps >= 1, InvalidArgument, "euler sampling needs at least one step");
    let dt = S::one() / S::lit(n_steps as f64);
    let mut x = x0.clone();
    for k in 0..n_steps {
        let t = S::lit(k as f64) / S::lit(n_steps as f64);
        let v = velocity(&x, t)?;
        ensure!(
            v.shape() == x.shape(),
            Shape,
            "velocity {:?} vs state {:?}",
            v.shape(),
            x.shape()
        );
        x.axpy(dt, &v)?;
        if !x.all_finite() {
            return Err(Error::NonFinite(format!(
                "euler state became non-finite at step {k} of {n_steps} (t = {t})"
            )));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_arithmetic() {
        let x0 = Mat::from_vec(1, 2, vec![0.0f64, 2.0]);
        let x1 = Mat::from_vec(1, 2, vec![4.0f64, 0.0]);
        assert_eq!(interpolate(&x0, &x1, 0.25).unwrap().data(), &[1.0, 1.5]);
        assert_eq!(velocity_target(&x0, &x1).unwrap().data(), &[4.0, -2.0]);
        assert!(interpolate(&x0, &x1, 1.5).is_err());
    }

    #[test]
    fn constant_offset_loss_is_one() {
        let vt = Mat::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.1);
        let l = rf_loss(|_, _| Ok(vt.map(|v| v + 1.0)), &vt, 0.5, &vt).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let l = rf_loss(|_, _| Ok(vt.clone()), &vt, 0.5, &vt).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn timestep_parsing_and_range() {
        assert_eq!(TimestepDist::parse("uniform").unwrap(), TimestepDist::Uniform);
        assert_eq!(
            TimestepDist::parse("logit_normal(0.5, 2)").unwrap(),
            TimestepDist::LogitNormal { mean: 0.5, std: 2.0 }
        );
        assert!(TimestepDist::parse("beta").is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = TimestepDist::LogitNormal { mean: 0.0, std: 1.0 };
        assert!((0..10_000).map(|_| d.sample(&mut rng)).all(|t| t > 0.0 && t < 1.0));
    }

    #[test]
    fn euler_reports_divergence() {
        let x0 = Mat::from_vec(1, 1, vec![1.0f64]);
        let err = euler_sample(|x, _| Ok(x.map(|v| v * 1e300)), &x0, 5).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(euler_sample(|x, _| Ok(x.clone()), &x0, 0).is_err());
    }
}
