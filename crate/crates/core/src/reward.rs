//! Episode reward: normalized high-risk count, final-distance proximity
//! and a collision bonus, summed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{normalize, NormalizationSpec, RiskProfile};
use crate::scalar::Scalar;
use crate::sim::{Outcome, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig<T> {
    pub range_lo: T,
    pub range_hi: T,
    pub collision_bonus: T,
    /// Final distance at and beyond which the distance term bottoms out, m.
    pub dist_ref: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            range_lo: T::lit(-0.01),
            range_hi: T::lit(0.01),
            collision_bonus: T::lit(0.25),
            dist_ref: T::lit(20.0),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_lo < self.range_hi) {
            return Err(Error::config("reward.range_lo", "must be below range_hi"));
        }
        if !(self.collision_bonus > self.range_hi) {
            return Err(Error::config("reward.collision_bonus", "must exceed range_hi"));
        }
        if !(self.dist_ref > T::zero() && self.dist_ref.is_finite()) {
            return Err(Error::config("reward.dist_ref", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub risk_term: T,
    pub distance_term: T,
    pub collision_term: T,
    pub total: T,
}

impl<T: Scalar> RewardBreakdown<T> {
    pub fn zero() -> Self {
        Self {
            risk_term: T::zero(),
            distance_term: T::zero(),
            collision_term: T::zero(),
            total: T::zero(),
        }
    }
}

pub fn risk_reward<T: Scalar>(profile: &RiskProfile<T>, cfg: &RewardConfig<T>) -> Result<T> {
    if profile.total_steps == 0 {
        return Err(Error::domain("risk_reward", "empty risk profile"));
    }
    let spec = NormalizationSpec::new(cfg.range_lo, cfg.range_hi, T::zero(), T::from_count(profile.total_steps))?;
    normalize(T::from_count(profile.high_risk_count), &spec)
}

/// Linear in the final distance, saturating at `dist_ref`.
pub fn distance_reward<T: Scalar>(final_dist: T, cfg: &RewardConfig<T>) -> Result<T> {
    if !(final_dist >= T::zero()) {
        return Err(Error::domain("distance_reward", format!("negative distance {final_dist}")));
    }
    let d = final_dist.min(cfg.dist_ref);
    Ok(cfg.range_hi - (cfg.range_hi - cfg.range_lo) * d / cfg.dist_ref)
}

pub fn collision_reward<T: Scalar>(outcome: Outcome, cfg: &RewardConfig<T>) -> T {
    if outcome == Outcome::Collision {
        cfg.collision_bonus
    } else {
        T::zero()
    }
}

pub fn total_reward<T: Scalar>(
    trace: &Trace<T>,
    profile: &RiskProfile<T>,
    cfg: &RewardConfig<T>,
) -> Result<RewardBreakdown<T>> {
    let risk_term = risk_reward(profile, cfg)?;
    let distance_term = distance_reward(trace.final_dist, cfg)?;
    let collision_term = collision_reward(trace.outcome, cfg);
    Ok(RewardBreakdown {
        risk_term,
        distance_term,
        collision_term,
        total: risk_term + distance_term + collision_term,
    })
}
