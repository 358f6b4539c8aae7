//! Simulation of RICS-assisted vehicular task offloading and the alternating
//! optimization that maximizes the total driving-safety coefficient.

pub mod aioa;
pub mod channel;
pub mod error;
pub mod harness;
pub mod link;
pub mod numopt;
pub mod offload;
pub mod rics;
pub mod rng;
pub mod scenario;
pub mod solver_fp;
pub mod solver_sca;
pub mod solver_sdr;

pub type C64 = nalgebra::Complex<f64>;

pub use error::{Error, Result};
