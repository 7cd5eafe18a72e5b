//! Prediction-consistent compensation of network delays and packet losses in
//! sampled-data control loops.
//!
//! The crate is organized bottom-up:
//!
//! - [`dynamics`]: exact and approximate discrete-time plant maps and their iteration.
//! - [`transport`]: stamped packets, lossy delaying channels and the actuator buffer.
//! - [`compensation`]: the controller, its prediction ledger and the consistency audit.
//! - [`mpc`]: the circle-tracking optimal control problem used as a sequence generator.
//! - [`bounds`]: error-bound functions, the measurement-error sequence `v` and the auxiliary replay.
//! - [`experiments`]: scenario files, the closed-loop runner, sweeps and report emission.

pub mod bounds;
pub mod compensation;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod mpc;
pub mod transport;

pub use bounds::{BoundParams, ErrorBoundModel, Growth, RobustnessBoundReport, Rho, VSequence};
pub use compensation::{
    CompensatorConfig, ConsistencyReport, Controller, FeedbackLaw, GeneratorSpec, InputGenerator, PredictionLedger,
};
pub use dynamics::{ControlVector, DisturbanceVector, PlantModel, Predictor, StateVector, Trajectory};
pub use error::{Error, Result};
pub use experiments::{run_scenario, RunRecord, RunStatus, Scenario};
pub use mpc::{MpcConfig, OcpSolution};
pub use transport::{ActuatorBuffer, ChannelModel, DelayModel, DelayRecord, LossModel, SwitchEvent};

/// Splits one user seed into independent streams (disturbance, sensor, actuator, ...).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over the combined input
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
