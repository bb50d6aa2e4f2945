//! Monte Carlo toolkit for coloured Johnson-Mehl tessellations.
//!
//! Everything here is `no_std` with `alloc`; IO and the command line live in
//! the companion crate.

#![no_std]

extern crate alloc;

pub mod coupling;
pub mod error;
pub mod faces;
pub mod geometry;
pub mod math;
pub mod percolation;
pub mod process;
pub mod rng;
pub mod stats;
pub mod tessellation;
pub mod unionfind;
