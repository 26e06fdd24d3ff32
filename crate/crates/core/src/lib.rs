//! Stackelberg equilibria for time-critical network interdiction games.
//!
//! An interdictor picks where to attack a UAV on its way from an origin to a
//! destination; the operator picks a path. Both sides may be fully rational
//! (expected delivery time) or follow cumulative prospect theory.

pub mod cpt;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod mdp;
pub mod montecarlo;
pub mod pt_game;
pub mod pure;
pub mod search;

pub use cpt::{PtParams, Prospect, Role, TruncationConfig};
pub use error::{Error, Result};
pub use graph::{GraphInstance, NodeId, NodeIdx, Path, RehandlingTime, SecurityGraph};
pub use mdp::{MixedInterdiction, Policy, StateValues};
pub use montecarlo::SimulationReport;
pub use pt_game::PtGameSpec;
pub use search::{SearchConfig, SearchResult};
