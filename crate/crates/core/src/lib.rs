// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation and analysis toolkit for pitch-and-catch quantum state
//! transfer between two microwave cavities linked by a transmission line.

pub mod calibration;
pub mod codes;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod optim;
pub mod pulse;
pub mod table;
pub mod tomography;
pub mod transfer;

pub use error::{Error, Result};
