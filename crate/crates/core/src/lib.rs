//! Falsification of an emergency-braking function in a pedestrian-crossing
//! scenario.
//!
//! A recurrent categorical policy proposes concrete scenarios from a
//! discretized parameter space; each one is simulated, scored with an
//! RSS-based reward, and the policy is improved with REINFORCE. Scenarios
//! in which the ego vehicle comes within `eps_dist` of the pedestrian
//! violate the requirement `always(not clash)`.
//!
//! Numeric modules are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix them to `f64`, which the engine and CLI use.

pub mod controller;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod param_space;
pub mod reward;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ParameterSpace = param_space::ParameterSpace<f64>;
pub type ConcreteScenario = param_space::ConcreteScenario<f64>;
pub type WorldConfig = sim::WorldConfig<f64>;
pub type SutConfig = sim::SutConfig<f64>;
pub type Trace = sim::Trace<f64>;
pub type RssParams = metrics::RssParams<f64>;
pub type SafetyRequirement = metrics::SafetyRequirement<f64>;
pub type RiskProfile = metrics::RiskProfile<f64>;
pub type RewardConfig = reward::RewardConfig<f64>;
pub type RewardBreakdown = reward::RewardBreakdown<f64>;
pub type Policy = controller::Policy<f64>;
pub type ActionSample = controller::ActionSample<f64>;

pub use controller::TrainConfig;
pub use param_space::ParameterSpec;
pub use sim::Outcome;
