//! Particle simulation, couplings and conservation-law numerics for the
//! attractive zero-range process with a destructive origin.

pub mod coupling;
pub mod error;
pub mod fenwick;
pub mod harness;
pub mod invariant;
pub mod oracle;
pub mod pde;
pub mod profile;
pub mod rate;
pub mod replicas;
pub mod rng;
pub mod sim;
pub mod testfn;
pub mod thermo;

pub use error::{Error, Result};
pub use profile::{DensityProfile, Rho0};
pub use rate::RateFunction;
pub use thermo::ThermoTable;
pub use sim::{Boundary, Configuration, EngineOptions, EventEngine, ModelParams, Window};
