//! Lambda-controlled alpha modification: the once-for-all knob.
//!
//! A scalar lambda in [0, 2) rescales the alpha weights before the firing
//! scan. Below 1 it interpolates toward all-ones (less compression, lambda=0
//! disables subsampling entirely); above 1 it scales alpha down, with the
//! denominator normalizing total mass to 1 once it would drop below the
//! firing threshold, so at least one boundary always exists. At lambda=1 the
//! weights pass through unchanged. Both pieces agree at 1, so one continuous
//! piecewise-linear function covers the whole range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cif::AlphaWeights;
use crate::diffmath::{sigmoid, Graph, NodeId};
use crate::error::{Error, Result};

/// Largest representable lambda: the interval [0, 2) excludes 2, where the
/// down-scaling case degenerates to all-zero weights.
pub const LAMBDA_MAX: f64 = 2.0 - 1e-6;

/// Uniform sampling interval for pre-training, low end pinned at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRange {
    pub low: f64,
    pub high: f64,
}

impl SampleRange {
    /// `high` of exactly 2 is clamped to [`LAMBDA_MAX`].
    pub fn new(low: f64, high: f64) -> Result<SampleRange> {
        let high = if high >= 2.0 { LAMBDA_MAX } else { high };
        if !(0.0..2.0).contains(&low) || !low.is_finite() || !high.is_finite() {
            return Err(Error::Config(format!("invalid sample range [{low}, {high}]")));
        }
        if high < low {
            return Err(Error::Config(format!("empty sample range [{low}, {high}]")));
        }
        Ok(SampleRange { low, high })
    }

    /// [0, 1]: compression up to the raw firing rate.
    pub fn unit() -> SampleRange {
        SampleRange { low: 0.0, high: 1.0 }
    }

    /// [0, 1.5].
    pub fn extended() -> SampleRange {
        SampleRange { low: 0.0, high: 1.5 }
    }

    /// [0, 2): the widest regime, down to one frame per utterance.
    pub fn full() -> SampleRange {
        SampleRange { low: 0.0, high: LAMBDA_MAX }
    }

    pub fn contains(&self, lambda: f64) -> bool {
        (self.low..=self.high).contains(&lambda)
    }
}

impl Default for SampleRange {
    fn default() -> Self {
        SampleRange::full()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    Fixed,
    Sampled,
    Trainable { theta: f64 },
}

/// A concrete lambda value plus how it came to be.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaControl {
    pub value: f64,
    pub lambda_max: f64,
    pub mode: LambdaMode,
}

impl LambdaControl {
    pub fn fixed(value: f64) -> Result<LambdaControl> {
        check_lambda(value)?;
        Ok(LambdaControl { value, lambda_max: LAMBDA_MAX, mode: LambdaMode::Fixed })
    }

    pub fn sampled(value: f64, range: &SampleRange) -> Result<LambdaControl> {
        check_lambda(value)?;
        Ok(LambdaControl { value, lambda_max: range.high, mode: LambdaMode::Sampled })
    }

    /// Sigmoid-mapped trainable form: value = lambda_max * sigmoid(theta).
    pub fn trainable(theta: f64, lambda_max: f64) -> Result<LambdaControl> {
        if !(0.0 < lambda_max && lambda_max <= 2.0) {
            return Err(Error::Config(format!("lambda_max {lambda_max} outside (0, 2]")));
        }
        let lambda_max = lambda_max.min(LAMBDA_MAX);
        let value = lambda_from_theta(theta, lambda_max);
        Ok(LambdaControl { value, lambda_max, mode: LambdaMode::Trainable { theta } })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || !(0.0..2.0).contains(&lambda) {
        return Err(Error::LambdaRange(lambda));
    }
    Ok(())
}

/// Apply the piecewise modification to plain alpha values.
///
/// lambda = 1 returns the input bit-for-bit. For lambda > 1 with total mass
/// already at or below the firing threshold, the weights also pass through
/// unchanged: the normalization exists to keep at least one boundary, and
/// the downstream tail/forced-fire rule already guarantees one output there.
/// Scaling such a sequence up to mass 1 would make the output discontinuous
/// in lambda at 1 and its mass non-monotone.
pub fn modify_alpha(alpha: &AlphaWeights, lambda: f64) -> Result<AlphaWeights> {
    check_lambda(lambda)?;
    let values = alpha.values();
    if lambda == 1.0 {
        return Ok(alpha.clone());
    }
    if lambda < 1.0 {
        // Interpolate toward all-ones; stays in [0, 1] exactly.
        let out = values.iter().map(|&a| lambda * a + (1.0 - lambda)).collect();
        AlphaWeights::new(out)
    } else {
        let total: f64 = values.iter().sum();
        if total <= 1.0 {
            return Ok(alpha.clone());
        }
        let scale = 2.0 - lambda;
        let denom = (scale * total).min(1.0);
        let out = values.iter().map(|&a| scale * a / denom).collect();
        AlphaWeights::new(out)
    }
}

/// Recorded version of [`modify_alpha`]: `alpha` is a vector node, `lambda`
/// a 1x1 node. The branch is picked from lambda's current value; gradients
/// flow through the active piece to both alpha and lambda.
pub fn modify_alpha_node(graph: &mut Graph, alpha: NodeId, lambda: NodeId) -> Result<NodeId> {
    let lam = graph.value(lambda).get(0, 0);
    check_lambda(lam)?;
    if lam == 1.0 {
        return Ok(alpha);
    }
    if lam < 1.0 {
        let scaled = graph.mul_scalar(alpha, lambda)?;
        let neg = graph.scale(lambda, -1.0);
        let one_minus = graph.add_const(neg, 1.0);
        graph.add_scalar(scaled, one_minus)
    } else {
        let total: f64 = graph.value(alpha).data().iter().sum();
        if total <= 1.0 {
            return Ok(alpha);
        }
        let neg = graph.scale(lambda, -1.0);
        let two_minus = graph.add_const(neg, 2.0);
        let sum = graph.sum(alpha);
        let prod = graph.mul(two_minus, sum)?;
        let one = graph.scalar(1.0);
        let denom = graph.min(prod, one)?;
        let inv = graph.recip(denom);
        let factor = graph.mul(two_minus, inv)?;
        graph.mul_scalar(alpha, factor)
    }
}

/// One uniform draw per pre-training step, shared by the whole batch.
pub fn sample_lambda(rng: &mut impl Rng, range: &SampleRange) -> f64 {
    if range.high == range.low {
        return range.low;
    }
    rng.gen_range(range.low..=range.high)
}

/// lambda = lambda_max * sigmoid(theta).
pub fn lambda_from_theta(theta: f64, lambda_max: f64) -> f64 {
    lambda_max * sigmoid(theta)
}

/// Recorded version of [`lambda_from_theta`] over a 1x1 theta node.
pub fn lambda_node_from_theta(graph: &mut Graph, theta: NodeId, lambda_max: f64) -> NodeId {
    let s = graph.sigmoid(theta);
    graph.scale(s, lambda_max)
}

/// Inverse of [`lambda_from_theta`], clamped away from saturation.
pub fn theta_from_lambda(lambda: f64, lambda_max: f64) -> f64 {
    let frac = (lambda / lambda_max).clamp(1e-6, 1.0 - 1e-6);
    (frac / (1.0 - frac)).ln()
}
