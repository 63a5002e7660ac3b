//! UAV-mounted integrated sensing and communication with movable antenna
//! arrays: channel model, performance metrics, per-block convex subproblem
//! builders, and the alternating-optimization driver with its benchmark
//! schemes and verification oracles.

pub mod ao;
pub mod baselines;
pub mod beamforming;
pub mod channel;
pub mod metrics;
pub mod oracles;
pub mod rxarray;
pub mod scenario;
pub mod trajectory;
pub mod txarray;

pub use scenario::{load_scenario, ArrayKind, ArrayLayout, Scenario, ScenarioError};
