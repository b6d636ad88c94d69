//! Trust-aware lane-change negotiation between an automated vehicle and a
//! human follower: Bayesian trust, a signaling stage game solved for its
//! perfect Bayesian equilibrium, and an eHMI disclosure policy, plus the
//! simulation, data and calibration tooling around them.

pub mod calibrate;
pub mod data;
pub mod disclosure;
pub mod game;
pub mod scenario;
pub mod sim;
pub mod trust;

pub use game::{Equilibrium, HavAction, StageGame, Weights};
pub use scenario::{Role, Scene, ScenarioConfig, ScenarioKind, VehicleState};
pub use trust::{ActionLabel, DriverType, LikelihoodTable, TrustBelief};
