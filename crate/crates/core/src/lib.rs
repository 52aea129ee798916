#![cfg_attr(not(feature = "std"), no_std)]
//! Numerical core for learned corrections of approximate forward operators.

extern crate alloc;

pub mod error;
pub mod fft;
pub mod grid;
pub mod linalg;
pub mod aem;
pub mod correction;
pub mod operators;
pub mod phantoms;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Measurement};
