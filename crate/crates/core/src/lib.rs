//! Probing-across-time engine.
//!
//! Everything here is pure computation over in-memory data: the shared data
//! model ([`series`]), the scoring contract and a toy masked LM ([`backend`]),
//! behavioral and structural probes ([`probes`]), relative-performance
//! references ([`baselines`]), learning-dynamics metrics ([`dynamics`]) and a
//! seeded synthetic language ([`synth`]). File formats, checkpoint storage and
//! the command line live in the `probetime` crate.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled;
//! `std` only switches the math and GEMM back-ends to their std flavors.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backend;
pub mod baselines;
pub mod dynamics;
mod error;
mod linalg;
pub mod probes;
mod rng;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
