pub mod cli;
pub mod dynamics;
pub mod error;
pub mod ga;
pub mod phase_space;
pub mod spin;
pub mod squeezing;
pub mod stats;
