//! Optimal carbon-capture control of a four-compartment carbon network.

pub mod control;
pub mod keyvars;
pub mod linalg;
pub mod network;
pub mod output;
pub mod pipeline;
pub mod scenario;
pub mod simulate;
