//! Co-simulation of electric vehicle charging on distribution feeders and
//! evacuation traffic on the road network of a linked synthetic city.

pub mod adoption;
pub mod cosim;
pub mod error;
pub mod grid;
pub mod io;
pub mod linker;
pub mod powerflow;
pub mod rng;
pub mod scenario;
pub mod synth;
pub mod traffic;

pub use error::{Error, ErrorCategory, Result};
