//! Deterministic 2D kinematic simulation of a pedestrian crossing with a
//! range- and field-of-view-limited emergency-braking stand-in as the
//! system under test.
//!
//! The ego vehicle drives along `y = lane_center_y` in +x. The pedestrian
//! starts on the curb at `crossing_x` and walks across the road toward
//! the ego lane, stopping at the far curb.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{euclid, SafetyRequirement};
use crate::param_space::ConcreteScenario;
use crate::scalar::Scalar;

/// Distance past the crosswalk at which the episode ends as passed.
pub const PASS_MARGIN: f64 = 5.0;

/// Scene geometry and integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig<T> {
    pub crossing_x: T,
    pub ego_base_x: T,
    pub ego_init_speed: T,
    pub lane_center_y: T,
    /// Curb the pedestrian starts behind; the offset parameter is added away from the road.
    pub ped_base_y: T,
    /// Curb on the opposite side, where the pedestrian stops.
    pub far_curb_y: T,
    pub dt: T,
    pub max_steps: usize,
}

impl<T: Scalar> Default for WorldConfig<T> {
    fn default() -> Self {
        Self {
            crossing_x: T::lit(60.0),
            ego_base_x: T::zero(),
            ego_init_speed: T::lit(8.33),
            lane_center_y: T::zero(),
            ped_base_y: T::lit(5.25),
            far_curb_y: T::lit(-1.75),
            dt: T::lit(0.05),
            max_steps: 400,
        }
    }
}

impl<T: Scalar> WorldConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("world.crossing_x", self.crossing_x),
            ("world.ego_base_x", self.ego_base_x),
            ("world.ego_init_speed", self.ego_init_speed),
            ("world.lane_center_y", self.lane_center_y),
            ("world.ped_base_y", self.ped_base_y),
            ("world.far_curb_y", self.far_curb_y),
            ("world.dt", self.dt),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if self.dt <= T::zero() {
            return Err(Error::config("world.dt", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("world.max_steps", "must be at least 1"));
        }
        if self.ego_base_x >= self.crossing_x {
            return Err(Error::config("world.ego_base_x", "ego must start before the crossing"));
        }
        if self.ego_init_speed < T::zero() {
            return Err(Error::config("world.ego_init_speed", "must be non-negative"));
        }
        if self.ped_base_y == self.lane_center_y {
            return Err(Error::config("world.ped_base_y", "curb must be off the ego lane center"));
        }
        let toward = (self.lane_center_y - self.ped_base_y).signum();
        if (self.far_curb_y - self.lane_center_y).signum() != toward {
            return Err(Error::config("world.far_curb_y", "must lie beyond the ego lane from the start curb"));
        }
        Ok(())
    }
}

/// Perception envelope and braking behavior of the stand-in AEB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SutConfig<T> {
    /// Detection range in clear weather, m. Zero disables detection.
    pub detect_range: T,
    /// Half-angle of the detection cone about the ego heading, degrees.
    pub fov_half_angle: T,
    /// Deceleration magnitude while braking, m/s².
    pub brake_decel: T,
    /// Steps between first detection and the first braking step.
    pub reaction_steps: usize,
    /// Detection-range multiplier indexed by weather preset.
    pub weather_range_mult: Vec<T>,
}

/// Linear multiplier table from 1.0 at preset 0 down to 0.5 at preset 14.
pub fn default_weather_table<T: Scalar>() -> Vec<T> {
    (0..15).map(|p| T::lit(1.0 - 0.5 * p as f64 / 14.0)).collect()
}

impl<T: Scalar> Default for SutConfig<T> {
    fn default() -> Self {
        Self {
            detect_range: T::lit(25.0),
            fov_half_angle: T::lit(12.0),
            brake_decel: T::lit(6.0),
            reaction_steps: 2,
            weather_range_mult: default_weather_table(),
        }
    }
}

impl<T: Scalar> SutConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.detect_range.is_finite() && self.detect_range >= T::zero()) {
            return Err(Error::config("sut.detect_range", "must be finite and non-negative"));
        }
        if !(self.fov_half_angle > T::zero() && self.fov_half_angle <= T::lit(90.0)) {
            return Err(Error::config("sut.fov_half_angle", "must lie in (0, 90] degrees"));
        }
        if !(self.brake_decel.is_finite() && self.brake_decel > T::zero()) {
            return Err(Error::config("sut.brake_decel", "must be positive"));
        }
        if self.weather_range_mult.is_empty() {
            return Err(Error::config("sut.weather_range_mult", "table is empty"));
        }
        for (i, &m) in self.weather_range_mult.iter().enumerate() {
            if !(m > T::zero() && m <= T::one()) {
                return Err(Error::config(
                    format!("sut.weather_range_mult[{i}]"),
                    format!("multiplier {m} outside (0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Range multiplier for a weather value, which must name a known preset.
    pub fn weather_mult(&self, weather: T) -> Result<T> {
        let r = weather.round();
        let idx = r.to_usize().filter(|_| (weather - r).abs() < T::lit(1e-6));
        idx.and_then(|i| self.weather_range_mult.get(i).copied())
            .ok_or_else(|| Error::config("sut.weather_range_mult", format!("unknown weather preset {weather}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoState<T> {
    pub x: T,
    pub speed: T,
    pub braking: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PedestrianState<T> {
    pub x: T,
    pub y: T,
    /// Walking speed along the crossing direction.
    pub speed: T,
    pub accel: T,
}

/// What the SUT perceives: ground-truth relative geometry and its own speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation<T> {
    /// Pedestrian position relative to the ego front, in the ego frame (x forward).
    pub rel: [T; 2],
    pub own_speed: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Cruise,
    Brake,
}

/// Detection memory of the SUT: steps elapsed since first detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DetectionLatch {
    since_first: Option<usize>,
}

impl DetectionLatch {
    pub fn triggered(&self) -> bool {
        self.since_first.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SutOutput {
    pub detected: bool,
    pub control: Control,
}

/// One control cycle of the stand-in AEB.
///
/// Detection fires when the pedestrian lies inside the weather-scaled range
/// and inside the forward cone. Braking starts `reaction_steps` cycles after
/// the first detection and then stays on.
pub fn sut_step<T: Scalar>(
    obs: &Observation<T>,
    sut: &SutConfig<T>,
    weather: T,
    memory: &mut DetectionLatch,
) -> Result<SutOutput> {
    let range = sut.detect_range * sut.weather_mult(weather)?;
    let [dx, dy] = obs.rel;
    let dist = dx.hypot(dy);
    let bearing = dy.atan2(dx).abs();
    let detected = dist < range && bearing <= sut.fov_half_angle.to_radians();

    memory.since_first = match memory.since_first {
        Some(n) => Some(n + 1),
        None if detected => Some(0),
        None => None,
    };
    let control = match memory.since_first {
        Some(n) if n >= sut.reaction_steps => Control::Brake,
        _ => Control::Cruise,
    };
    Ok(SutOutput { detected, control })
}

/// Explicit Euler step of both agents.
pub fn integrate_step<T: Scalar>(
    ego: EgoState<T>,
    ped: PedestrianState<T>,
    world: &WorldConfig<T>,
    brake_decel: T,
    control: Control,
) -> (EgoState<T>, PedestrianState<T>) {
    let dt = world.dt;
    let braking = control == Control::Brake;
    let mut speed = ego.speed;
    if braking {
        speed = (speed - brake_decel * dt).max(T::zero());
    }
    let next_ego = EgoState {
        x: ego.x + ego.speed * dt,
        speed,
        braking,
    };

    let dir = (world.lane_center_y - world.ped_base_y).signum();
    let mut y = ped.y + dir * ped.speed * dt;
    let mut p_speed = ped.speed + ped.accel * dt;
    let mut accel = ped.accel;
    let overshoot = (y - world.far_curb_y) * dir;
    if overshoot >= T::zero() {
        y = world.far_curb_y;
        p_speed = T::zero();
        accel = T::zero();
    }
    let next_ped = PedestrianState {
        x: ped.x,
        y,
        speed: p_speed,
        accel,
    };
    (next_ego, next_ped)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Collision,
    StoppedBeforeCrossing,
    PassedCrossing,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Collision => "Collision",
            Outcome::StoppedBeforeCrossing => "StoppedBeforeCrossing",
            Outcome::PassedCrossing => "PassedCrossing",
            Outcome::Timeout => "Timeout",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Collision" => Outcome::Collision,
            "StoppedBeforeCrossing" => Outcome::StoppedBeforeCrossing,
            "PassedCrossing" => Outcome::PassedCrossing,
            "Timeout" => Outcome::Timeout,
            other => return Err(Error::Validation(format!("unknown outcome `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub t: T,
    pub ego_x: T,
    pub ego_speed: T,
    pub ped_x: T,
    pub ped_y: T,
    pub euclid_dist: T,
    pub detected: bool,
    pub braking: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace<T> {
    pub steps: Vec<StepRecord<T>>,
    pub outcome: Outcome,
    pub final_dist: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub outcome: Outcome,
    pub final_dist: f64,
    pub steps: usize,
}

impl<T: Scalar> Trace<T> {
    pub const CSV_HEADER: [&'static str; 8] =
        ["t", "ego_x", "ego_speed", "ped_x", "ped_y", "dist", "detected", "braking"];

    pub fn min_dist(&self) -> T {
        self.steps.iter().map(|s| s.euclid_dist).fold(T::infinity(), T::min)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            outcome: self.outcome,
            final_dist: self.final_dist.as_f64(),
            steps: self.steps.len(),
        }
    }

    /// Writes one row per step. Values use shortest round-trip formatting,
    /// so identical traces produce identical bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                s.ego_x.to_string(),
                s.ego_speed.to_string(),
                s.ped_x.to_string(),
                s.ped_y.to_string(),
                s.euclid_dist.to_string(),
                s.detected.to_string(),
                s.braking.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }
}

/// Named view of the five scenario values in table order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioValues<T> {
    pub ego_offset_pos: T,
    pub ped_accel: T,
    pub ped_vel: T,
    pub ped_offset_pos: T,
    pub weather: T,
}

impl<T: Scalar> TryFrom<&ConcreteScenario<T>> for ScenarioValues<T> {
    type Error = Error;

    fn try_from(s: &ConcreteScenario<T>) -> Result<Self> {
        match *s.values.as_slice() {
            [ego_offset_pos, ped_accel, ped_vel, ped_offset_pos, weather] => Ok(Self {
                ego_offset_pos,
                ped_accel,
                ped_vel,
                ped_offset_pos,
                weather,
            }),
            _ => Err(Error::Validation(format!(
                "simulator expects 5 scenario values, got {}",
                s.values.len()
            ))),
        }
    }
}

/// Lowest initial walking speed; nonpositive sampled speeds are raised to it.
pub const MIN_PED_SPEED: f64 = 0.01;

pub fn initial_states<T: Scalar>(v: &ScenarioValues<T>, world: &WorldConfig<T>) -> (EgoState<T>, PedestrianState<T>) {
    let away = (world.ped_base_y - world.lane_center_y).signum();
    let ego = EgoState {
        x: world.ego_base_x + v.ego_offset_pos,
        speed: world.ego_init_speed,
        braking: false,
    };
    let ped = PedestrianState {
        x: world.crossing_x,
        y: world.ped_base_y + away * v.ped_offset_pos,
        speed: v.ped_vel.max(T::lit(MIN_PED_SPEED)),
        accel: v.ped_accel,
    };
    (ego, ped)
}

/// Runs one episode to termination. Pure: identical inputs give identical traces.
pub fn run_episode<T: Scalar>(
    scenario: &ConcreteScenario<T>,
    world: &WorldConfig<T>,
    sut: &SutConfig<T>,
    req: &SafetyRequirement<T>,
) -> Result<Trace<T>> {
    let values = ScenarioValues::try_from(scenario)?;
    // fail on an unknown preset before simulating
    sut.weather_mult(values.weather)?;
    let (mut ego, mut ped) = initial_states(&values, world);
    let mut latch = DetectionLatch::default();
    let mut steps = Vec::with_capacity(world.max_steps.min(4096));
    let pass_x = world.crossing_x + T::lit(PASS_MARGIN);

    for k in 0..world.max_steps {
        let state = [ego.x, ego.speed, ped.x, ped.y, ped.speed];
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                step: k,
                reason: format!(
                    "non-finite state: ego_x={} ego_speed={} ped=({}, {}) ped_speed={}",
                    ego.x, ego.speed, ped.x, ped.y, ped.speed
                ),
            });
        }
        let ego_pos = [ego.x, world.lane_center_y];
        let ped_pos = [ped.x, ped.y];
        let dist = euclid(ego_pos, ped_pos);
        let obs = Observation {
            rel: [ped.x - ego.x, ped.y - world.lane_center_y],
            own_speed: ego.speed,
        };
        let out = sut_step(&obs, sut, values.weather, &mut latch)?;
        steps.push(StepRecord {
            t: T::from_count(k) * world.dt,
            ego_x: ego.x,
            ego_speed: ego.speed,
            ped_x: ped.x,
            ped_y: ped.y,
            euclid_dist: dist,
            detected: out.detected,
            braking: out.control == Control::Brake,
        });

        let outcome = if req.clash(dist) {
            Some(Outcome::Collision)
        } else if ego.speed <= T::zero() && ego.x < world.crossing_x {
            Some(Outcome::StoppedBeforeCrossing)
        } else if ego.x > pass_x {
            Some(Outcome::PassedCrossing)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            return Ok(Trace {
                steps,
                outcome,
                final_dist: dist,
            });
        }
        (ego, ped) = integrate_step(ego, ped, world, sut.brake_decel, out.control);
    }

    let final_dist = steps.last().map(|s| s.euclid_dist).unwrap_or_else(T::infinity);
    Ok(Trace {
        steps,
        outcome: Outcome::Timeout,
        final_dist,
    })
}
