//! Exact mixed-strategy Nash equilibria of finite N-player normal-form games.
//!
//! An equilibrium is a zero of the regret-squared objective
//! `Q̃(x) = Σ_{i,j} max(u^i(s^i_j, x^{-i}) - u^i(x), 0)²` on the product of
//! strategy simplices. [`dynamics`] drives a single start point to a feasible
//! critical point of `Q̃` with an adaptive-penalty flow; [`swarm`] restarts a
//! population of such flows with a particle-swarm rule until the group best
//! reaches zero. [`oracle`] certifies candidates independently.
//!
//! The numerical core is generic over [`Scalar`]; the aliases below fix it
//! to `f64` (and `f32` for the game types).

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod io;
pub mod oracle;
pub mod penalty;
pub mod scalar;
pub mod swarm;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Game = game::GameTensor<f64>;
pub type Game32 = game::GameTensor<f32>;
pub type Profile = game::MixedProfile<f64>;
pub type Profile32 = game::MixedProfile<f32>;
pub type AnaSettings = dynamics::AnaSettings<f64>;
pub type AnaOutcome = dynamics::AnaOutcome<f64>;
pub type SwarmSettings = swarm::SwarmSettings<f64>;
pub type AcnaOutcome = swarm::AcnaOutcome<f64>;
pub type Certificate = oracle::EquilibriumCertificate<f64>;
