//! Label priors and the bisection routine shared by every numerical inverse.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Probability used in place of 0 and 1 when a normal prior has to produce a
/// finite label for a saturated mean choice.
pub const NORMAL_CLAMP: f64 = 1e-12;

/// Root of an increasing function by bisection on `[lo, hi]`.
///
/// Returns the endpoint when `target` lies outside `[f(lo), f(hi)]`. Runs
/// until the bracket collapses to adjacent floats.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= target {
        return lo;
    }
    if f(hi) <= target {
        return hi;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == target {
            return mid;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the closer endpoint in value space.
    if (target - f(lo)).abs() <= (f(hi) - target).abs() { lo } else { hi }
}

/// Assumed distribution of true labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelPrior {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl LabelPrior {
    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::Input(format!("invalid uniform prior bounds ({low}, {high})")));
        }
        Ok(LabelPrior::Uniform { low, high })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::Input(format!("invalid normal prior ({mean}, {sd})")));
        }
        Ok(LabelPrior::Normal { mean, sd })
    }

    /// `uniform(-1, 1)`, the default label scale.
    pub fn standard_uniform() -> Self {
        LabelPrior::Uniform { low: -1.0, high: 1.0 }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            LabelPrior::Uniform { low, high } => ((y - low) / (high - low)).clamp(0.0, 1.0),
            LabelPrior::Normal { mean, sd } => 0.5 * erfc(-(y - mean) / (sd * std::f64::consts::SQRT_2)),
        }
    }

    /// `1 - cdf(y)`, evaluated without cancellation in the upper tail.
    pub fn survival(&self, y: f64) -> f64 {
        match *self {
            LabelPrior::Uniform { low, high } => ((high - y) / (high - low)).clamp(0.0, 1.0),
            LabelPrior::Normal { mean, sd } => 0.5 * erfc((y - mean) / (sd * std::f64::consts::SQRT_2)),
        }
    }

    pub fn quantile(&self, prob: f64) -> f64 {
        let prob = prob.clamp(0.0, 1.0);
        match *self {
            LabelPrior::Uniform { low, high } => low + prob * (high - low),
            LabelPrior::Normal { mean, sd } => {
                if prob == 0.0 {
                    return f64::NEG_INFINITY;
                }
                if prob == 1.0 {
                    return f64::INFINITY;
                }
                let (lo, hi) = (mean - 40.0 * sd, mean + 40.0 * sd);
                if prob > 0.5 {
                    // Invert the survival function where the cdf is flat in f64.
                    bisect_increasing(|y| -self.survival(y), -(1.0 - prob), lo, hi)
                } else {
                    bisect_increasing(|y| self.cdf(y), prob, lo, hi)
                }
            }
        }
    }

    /// Label with upper-tail mass `tail`, i.e. `quantile(1 - tail)` without
    /// rounding `1 - tail` first.
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        match *self {
            LabelPrior::Normal { mean, sd } if tail > 0.0 && tail < 0.5 => {
                bisect_increasing(|y| -self.survival(y), -tail, mean - 40.0 * sd, mean + 40.0 * sd)
            }
            _ => self.quantile(1.0 - tail),
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            LabelPrior::Uniform { low, high } => 0.5 * (low + high),
            LabelPrior::Normal { mean, .. } => mean,
        }
    }

    /// Finite label range used by the choice inversion.
    pub fn inversion_bounds(&self) -> (f64, f64) {
        match *self {
            LabelPrior::Uniform { low, high } => (low, high),
            LabelPrior::Normal { .. } => (self.quantile(NORMAL_CLAMP), self.upper_quantile(NORMAL_CLAMP)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LabelPrior::Uniform { low, high } => Uniform::new(low, high).expect("valid bounds").sample(rng),
            LabelPrior::Normal { mean, sd } => Normal::new(mean, sd).expect("valid sd").sample(rng),
        }
    }
}

impl fmt::Display for LabelPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelPrior::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
            LabelPrior::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
        }
    }
}

/// Parses `uniform:A,B` or `normal:MEAN,SD`.
impl FromStr for LabelPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("prior `{s}` must look like uniform:-1,1 or normal:0,1")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("prior `{s}`: {e}")))?;
        if nums.len() != 2 {
            return Err(Error::Input(format!("prior `{s}` needs two parameters")));
        }
        match kind.trim() {
            "uniform" => LabelPrior::uniform(nums[0], nums[1]),
            "normal" => LabelPrior::normal(nums[0], nums[1]),
            other => Err(Error::Input(format!("unknown prior kind `{other}`"))),
        }
    }
}
