//! Two-time-scale mean-field toolkit.
//!
//! A finite-state mean-field particle system coupled to a fast finite-state
//! environment: `N` particles hop on a directed graph with rates that depend
//! on the empirical measure and the environment state, while the environment
//! hops at rate `O(N)` with rates that depend on the empirical measure.
//!
//! The crate provides
//! * exact event-driven simulation of the joint process ([`sim`]),
//! * the averaged (McKean-Vlasov) limit dynamics ([`averaging`]),
//! * numerical evaluation of the path-space large-deviations rate
//!   functional, its per-time concave maximisations and dual densities
//!   ([`ratefn`]),
//! * statistical probes tying the two together: averaging checks,
//!   occupation-measure concentration, exponential-martingale batteries and
//!   rare-event exponent probes ([`probe`]).

pub mod averaging;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod model;
pub mod probe;
pub mod ratefn;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
pub use graph::DirectedGraph;
pub use model::{ModelSpec, ValidationReport};
pub use simplex::{SimplexVector, ToleranceConfig};
