//! Simulation and verification tools for weighted interacting diffusions
//! driven by singular kernels.

pub mod error;
pub mod fft;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod measure;
pub mod particles;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod serde_ext;
pub mod testfn;
pub mod validate;
pub mod weights;

pub use error::{Error, Result};
