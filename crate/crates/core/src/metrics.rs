//! Safety metrics over a simulated trace: RSS minimum safe longitudinal
//! distance, the Euclidean clash predicate, Boolean evaluation of the
//! "always no clash" requirement, high-risk timestep classification and
//! min-max normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::Trace;

/// RSS constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssParams<T> {
    /// Response time of the rear (ego) vehicle, s.
    pub rho: T,
    /// Maximum acceleration during the response time, m/s².
    pub a_max_accel: T,
    /// Minimum reasonable braking of the ego vehicle, m/s².
    pub a_min_brake: T,
    /// Maximum braking of the front agent, m/s².
    pub a_max_brake: T,
}

impl<T: Scalar> Default for RssParams<T> {
    fn default() -> Self {
        Self {
            rho: T::lit(0.5),
            a_max_accel: T::lit(2.0),
            a_min_brake: T::lit(4.0),
            a_max_brake: T::lit(8.0),
        }
    }
}

impl<T: Scalar> RssParams<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rss.rho", self.rho),
            ("rss.a_max_accel", self.a_max_accel),
            ("rss.a_min_brake", self.a_min_brake),
            ("rss.a_max_brake", self.a_max_brake),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::config(name, format!("must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Minimum safe longitudinal distance between a rear vehicle at `v_rear`
/// and a front agent at `v_front`, clamped at zero.
pub fn rss_min_distance<T: Scalar>(v_rear: T, v_front: T, p: &RssParams<T>) -> Result<T> {
    p.validate()?;
    if !(v_rear >= T::zero() && v_front >= T::zero()) {
        return Err(Error::domain(
            "rss_min_distance",
            format!("speeds must be non-negative, got v_r={v_rear}, v_f={v_front}"),
        ));
    }
    Ok(rss_unchecked(v_rear, v_front, p))
}

#[inline]
fn rss_unchecked<T: Scalar>(v_r: T, v_f: T, p: &RssParams<T>) -> T {
    let two = T::lit(2.0);
    let reach = v_r + p.rho * p.a_max_accel;
    let d = v_r * p.rho + T::lit(0.5) * p.a_max_accel * p.rho * p.rho + reach * reach / (two * p.a_min_brake)
        - v_f * v_f / (two * p.a_max_brake);
    d.max(T::zero())
}

/// Euclidean distance between two planar points.
#[inline]
pub fn euclid<T: Scalar>(p: [T; 2], q: [T; 2]) -> T {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// The STL requirement `always(not clash)` with `clash := dist < eps_dist`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyRequirement<T> {
    pub eps_dist: T,
}

impl<T: Scalar> Default for SafetyRequirement<T> {
    fn default() -> Self {
        Self { eps_dist: T::one() }
    }
}

impl<T: Scalar> SafetyRequirement<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_dist.is_finite() && self.eps_dist > T::zero()) {
            return Err(Error::config("requirement.eps_dist", "must be strictly positive"));
        }
        Ok(())
    }

    /// The atomic clash predicate.
    #[inline]
    pub fn clash(&self, dist: T) -> bool {
        dist < self.eps_dist
    }
}

/// Boolean satisfaction of `always(not clash)` over the finite trace.
pub fn stl_satisfied<T: Scalar>(trace: &Trace<T>, req: &SafetyRequirement<T>) -> bool {
    trace.steps.iter().all(|s| !req.clash(s.euclid_dist))
}

/// Per-timestep high-risk classification of one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskProfile<T> {
    pub flags: Vec<bool>,
    pub high_risk_count: usize,
    pub total_steps: usize,
    /// High-risk fraction over the second half of the trace. A single-step
    /// trace has no second half; the whole-trace fraction is stored instead.
    pub second_half_fraction: T,
}

impl<T: Scalar> RiskProfile<T> {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let total_steps = flags.len();
        let high_risk_count = flags.iter().filter(|&&f| f).count();
        let second_half_fraction = second_half_of(&flags).unwrap_or_else(|_| {
            if total_steps == 0 {
                T::zero()
            } else {
                T::from_count(high_risk_count) / T::from_count(total_steps)
            }
        });
        Self {
            flags,
            high_risk_count,
            total_steps,
            second_half_fraction,
        }
    }

    pub fn overall_fraction(&self) -> T {
        if self.total_steps == 0 {
            return T::zero();
        }
        T::from_count(self.high_risk_count) / T::from_count(self.total_steps)
    }
}

/// RSS minimum distance at every step, with the pedestrian as a front
/// agent with no longitudinal escape speed.
pub fn per_step_min_distance<T: Scalar>(trace: &Trace<T>, p: &RssParams<T>) -> Result<Vec<T>> {
    p.validate()?;
    trace
        .steps
        .iter()
        .map(|s| rss_min_distance(s.ego_speed, T::zero(), p))
        .collect()
}

/// A step is high-risk when the ego-pedestrian distance is below the RSS
/// minimum distance while the pedestrian is still in front of the ego
/// (`ped_x >= ego_x`). Once passed, the pedestrian is no longer a front agent.
pub fn classify_timesteps<T: Scalar>(trace: &Trace<T>, p: &RssParams<T>) -> Result<RiskProfile<T>> {
    let d_min = per_step_min_distance(trace, p)?;
    let flags = trace
        .steps
        .iter()
        .zip(d_min)
        .map(|(s, d)| s.ped_x >= s.ego_x && s.euclid_dist < d)
        .collect();
    Ok(RiskProfile::from_flags(flags))
}

/// High-risk fraction over steps with index `>= ceil(n/2)`.
pub fn second_half_fraction<T: Scalar>(profile: &RiskProfile<T>) -> Result<T> {
    second_half_of(&profile.flags)
}

fn second_half_of<T: Scalar>(flags: &[bool]) -> Result<T> {
    let n = flags.len();
    if n < 2 {
        return Err(Error::domain(
            "second_half_fraction",
            format!("needs at least 2 steps, trace has {n}"),
        ));
    }
    let start = n.div_ceil(2);
    let tail = &flags[start..];
    let hits = tail.iter().filter(|&&f| f).count();
    Ok(T::from_count(hits) / T::from_count(tail.len()))
}

/// Affine map of `[in_min, in_max]` onto `[out_lo, out_hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationSpec<T> {
    pub out_lo: T,
    pub out_hi: T,
    pub in_min: T,
    pub in_max: T,
}

impl<T: Scalar> NormalizationSpec<T> {
    pub fn new(out_lo: T, out_hi: T, in_min: T, in_max: T) -> Result<Self> {
        if !(out_lo < out_hi) {
            return Err(Error::config("normalization.out", "requires out_lo < out_hi"));
        }
        if !(in_min < in_max) {
            return Err(Error::config("normalization.in", "requires in_min < in_max"));
        }
        Ok(Self {
            out_lo,
            out_hi,
            in_min,
            in_max,
        })
    }
}

pub fn normalize<T: Scalar>(x: T, spec: &NormalizationSpec<T>) -> Result<T> {
    if !(x >= spec.in_min && x <= spec.in_max) {
        return Err(Error::domain(
            "normalize",
            format!("{x} outside [{}, {}]", spec.in_min, spec.in_max),
        ));
    }
    // t is exactly 0, 1/2 and 1 at the minimum, midpoint and maximum
    let t = (x - spec.in_min) / (spec.in_max - spec.in_min);
    Ok(spec.out_lo + (spec.out_hi - spec.out_lo) * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Outcome, StepRecord};
    use proptest::prelude::*;

    fn params(rho: f64, aa: f64, amin: f64, amax: f64) -> RssParams<f64> {
        RssParams {
            rho,
            a_max_accel: aa,
            a_min_brake: amin,
            a_max_brake: amax,
        }
    }

    fn trace_from(dists: &[f64], speeds: &[f64]) -> Trace<f64> {
        let steps = dists
            .iter()
            .zip(speeds)
            .enumerate()
            .map(|(i, (&d, &v))| StepRecord {
                t: i as f64 * 0.05,
                ego_x: 0.0,
                ego_speed: v,
                ped_x: d,
                ped_y: 0.0,
                euclid_dist: d,
                detected: false,
                braking: false,
            })
            .collect::<Vec<_>>();
        let final_dist = *dists.last().unwrap();
        Trace {
            steps,
            outcome: Outcome::PassedCrossing,
            final_dist,
        }
    }

    #[test]
    fn rss_worked_case() {
        let d = rss_min_distance(10.0, 0.0, &params(0.5, 2.0, 4.0, 8.0)).unwrap();
        assert!((d - 20.375).abs() < 1e-12, "{d}");
    }

    #[test]
    fn rss_at_rest_vanishes() {
        let d = rss_min_distance(0.0, 0.0, &params(0.5, 1e-12, 4.0, 8.0)).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn rss_clamps_negative() {
        // raw value is -400/16 plus a vanishing term
        let p = params(0.5, 1e-12, 4.0, 8.0);
        assert_eq!(rss_min_distance(0.0, 20.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn rss_rejects_bad_params_and_speeds() {
        assert!(matches!(
            rss_min_distance(1.0, 0.0, &params(0.0, 2.0, 4.0, 8.0)),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            rss_min_distance(-1.0, 0.0, &RssParams::default()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn rss_monotone_on_grid() {
        let p = RssParams::default();
        let speeds: Vec<f64> = (0..=20).map(|i| i as f64 * 0.75).collect();
        for &vf in &speeds {
            for w in speeds.windows(2) {
                assert!(rss_min_distance(w[0], vf, &p).unwrap() <= rss_min_distance(w[1], vf, &p).unwrap());
            }
        }
        for &vr in &speeds {
            for w in speeds.windows(2) {
                assert!(rss_min_distance(vr, w[0], &p).unwrap() >= rss_min_distance(vr, w[1], &p).unwrap());
            }
        }
    }

    #[test]
    fn euclid_basics() {
        assert_eq!(euclid([0.0, 0.0], [0.0, 0.0]), 0.0);
        assert_eq!(euclid([0.0, 0.0], [3.0, 4.0]), 5.0);
        assert_eq!(euclid([1.5f32, -2.0], [1.5, -2.0]), 0.0);
    }

    // double-double helpers for an extended-precision reference distance
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }
    fn dd_euclid(p: [f64; 2], q: [f64; 2]) -> f64 {
        let (dx, ex) = two_sum(p[0], -q[0]);
        let (dy, ey) = two_sum(p[1], -q[1]);
        // (dx+ex)^2 + (dy+ey)^2 in double-double
        let (xx, xe) = two_prod(dx, dx);
        let (yy, ye) = two_prod(dy, dy);
        let (s, se) = two_sum(xx, yy);
        let lo = se + xe + ye + 2.0 * dx * ex + 2.0 * dy * ey;
        let (hi, lo) = two_sum(s, lo);
        // one Newton step on the double-double square root
        let r = hi.sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let (rr, rre) = two_prod(r, r);
        let resid = (hi - rr) - rre + lo;
        r + resid / (2.0 * r)
    }

    proptest! {
        #[test]
        fn euclid_matches_extended_precision(
            a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3, d in -1e3f64..1e3
        ) {
            let got = euclid([a, b], [c, d]);
            let want = dd_euclid([a, b], [c, d]);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
            prop_assert_eq!(got, euclid([c, d], [a, b]));
        }

        #[test]
        fn normalize_is_affine(x1 in 0.0f64..400.0, x2 in 0.0f64..400.0) {
            let spec = NormalizationSpec::new(-0.01, 0.01, 0.0, 400.0).unwrap();
            let lhs = normalize(x1, &spec).unwrap() + normalize(x2, &spec).unwrap();
            let rhs = 2.0 * normalize((x1 + x2) / 2.0, &spec).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn classification_translation_invariant(
            pts in prop::collection::vec((-2048i32..2048, -2048i32..2048, 0u8..40), 2..30),
            sx in -1024i32..1024, sy in -1024i32..1024,
        ) {
            // coordinates on a 1/64 grid keep translations exact
            let q = |v: i32| v as f64 / 64.0;
            let build = |ox: f64, oy: f64| {
                let steps = pts.iter().enumerate().map(|(i, &(px, py, v))| {
                    let ego = [ox, oy];
                    let ped = [q(px) + ox, q(py) + oy];
                    StepRecord {
                        t: i as f64 * 0.05, ego_x: ego[0], ego_speed: v as f64 * 0.25,
                        ped_x: ped[0], ped_y: ped[1], euclid_dist: euclid(ego, ped),
                        detected: false, braking: false,
                    }
                }).collect::<Vec<_>>();
                let final_dist = steps.last().unwrap().euclid_dist;
                Trace { steps, outcome: Outcome::Timeout, final_dist }
            };
            let p = RssParams::default();
            let a = classify_timesteps(&build(0.0, 0.0), &p).unwrap();
            let b = classify_timesteps(&build(q(sx), q(sy)), &p).unwrap();
            prop_assert_eq!(a.flags, b.flags);
        }
    }

    #[test]
    fn stl_cases() {
        let req = SafetyRequirement { eps_dist: 1.0 };
        assert!(stl_satisfied(&trace_from(&[10.0; 5], &[5.0; 5]), &req));
        assert!(!stl_satisfied(&trace_from(&[10.0, 0.5, 10.0], &[5.0; 3]), &req));
        // the clash predicate is strict
        assert!(stl_satisfied(&trace_from(&[3.0, 1.0, 2.0], &[5.0; 3]), &req));
    }

    #[test]
    fn normalize_endpoints() {
        let spec = NormalizationSpec::new(-0.01, 0.01, 0.0, 400.0).unwrap();
        assert_eq!(normalize(0.0, &spec).unwrap(), -0.01);
        assert_eq!(normalize(400.0, &spec).unwrap(), 0.01);
        assert_eq!(normalize(200.0, &spec).unwrap(), 0.0);
        assert!(normalize(401.0, &spec).is_err());
        assert!(normalize(-1.0, &spec).is_err());
        assert!(NormalizationSpec::new(0.01, -0.01, 0.0, 1.0).is_err());
        assert!(NormalizationSpec::new(-0.01, 0.01, 1.0, 1.0).is_err());
    }

    #[test]
    fn classify_far_trace_is_safe() {
        let t = trace_from(&[100.0, 150.0, 120.0, 101.0], &[10.0, 8.0, 0.0, 3.0]);
        let prof = classify_timesteps(&t, &RssParams::default()).unwrap();
        assert_eq!(prof.high_risk_count, 0);
    }

    #[test]
    fn classify_zero_distance_all_risky() {
        let t = trace_from(&[0.0; 6], &[0.0, 1.0, 2.0, 3.0, 0.0, 9.0]);
        let prof = classify_timesteps(&t, &RssParams::default()).unwrap();
        assert_eq!(prof.high_risk_count, 6);
        assert_eq!(prof.second_half_fraction, 1.0);
    }

    #[test]
    fn passed_pedestrian_is_not_high_risk() {
        let mut t = trace_from(&[2.0, 1.5, 1.5, 2.0], &[8.0; 4]);
        t.steps[2].ego_x = 2.0;
        t.steps[3].ego_x = 4.0;
        let prof = classify_timesteps(&t, &RssParams::default()).unwrap();
        assert_eq!(prof.flags, [true, true, false, false]);
        // level with the pedestrian still counts as in front
        t.steps[3].ego_x = t.steps[3].ped_x;
        let prof = classify_timesteps(&t, &RssParams::default()).unwrap();
        assert_eq!(prof.flags, [true, true, false, true]);
    }

    #[test]
    fn classify_matches_per_step_oracle() {
        let p = params(0.5, 2.0, 4.0, 8.0);
        let speeds = [10.0, 10.0, 8.0, 8.0, 6.0, 6.0, 4.0, 2.0, 1.0, 0.0];
        // per-step oracle: d_min = v*rho + 0.25 + (v+1)^2/8
        let oracle: Vec<f64> = speeds.iter().map(|&v| v * 0.5 + 0.25 + (v + 1.0) * (v + 1.0) / 8.0).collect();
        let offsets = [-0.5, 0.5, -0.01, 0.01, -3.0, 3.0, -0.2, 0.2, -0.1, 0.1];
        let dists: Vec<f64> = oracle.iter().zip(offsets).map(|(d, o)| d + o).collect();
        let prof = classify_timesteps(&trace_from(&dists, &speeds), &p).unwrap();
        let want: Vec<bool> = offsets.iter().map(|&o| o < 0.0).collect();
        assert_eq!(prof.flags, want);
        assert_eq!(prof.high_risk_count, 5);
    }

    #[test]
    fn second_half_cases() {
        let all = RiskProfile::<f64>::from_flags(vec![true; 8]);
        assert_eq!(second_half_fraction(&all).unwrap(), 1.0);
        let none = RiskProfile::<f64>::from_flags(vec![false; 8]);
        assert_eq!(second_half_fraction(&none).unwrap(), 0.0);
        let mut flags = vec![false; 10];
        flags[5..].iter_mut().for_each(|f| *f = true);
        let p = RiskProfile::<f64>::from_flags(flags);
        assert_eq!(second_half_fraction(&p).unwrap(), 1.0);
        assert_eq!(p.overall_fraction(), 0.5);
        // odd length: second half is indices 3..5
        let p = RiskProfile::<f64>::from_flags(vec![false, false, false, true, true]);
        assert_eq!(second_half_fraction(&p).unwrap(), 1.0);
        assert!(second_half_fraction(&RiskProfile::<f64>::from_flags(vec![true])).is_err());
    }
}
