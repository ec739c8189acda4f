//! Eigenwave multiplexing over doubly-dispersive channels.
//!
//! The core types are generic over the real scalar (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// NaN must fail these guards, so `!(x > 0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod hogmt;
pub mod io;
pub mod kernel;
pub mod modem;
pub mod otfs;
pub mod random;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod svd;

pub use error::{Error, Result};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type Kernel = kernel::KernelMatrix<f64>;
pub type Eigenwaves = hogmt::EigenwaveSet<f64>;
pub type Allocation = modem::PowerAllocation<f64>;
pub type DdGrid = otfs::DelayDopplerGrid<f64>;
