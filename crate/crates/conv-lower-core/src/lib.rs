//! Exact lowering of wide-kernel 2D convolutions and one-hidden-layer ReLU
//! networks onto deep CNNs built entirely from 3x3 multi-channel layers.
//!
//! The crate has two halves:
//!
//! * a lowering pipeline that rewrites a single (2k+1)x(2k+1) convolution as
//!   a cascade of k-1 shift stages plus one terminal 3x3 projection
//!   ([`decompose`]), and network builders that ride on it to reproduce a
//!   shallow ReLU net as a classic, residual, pre-activation residual, or
//!   injection-style CNN ([`construct`]) — all equalities exact on a bounded
//!   input box, not approximations;
//! * a self-contained verification harness ([`harness`]) with an independent
//!   convolution oracle, a seeded equivalence certifier, structural plan
//!   audits, parameter accounting, and a falsification probe showing the
//!   construction is padding-sensitive.
//!
//! The crate is `no_std` (with `alloc`); file formats, parallelism and the
//! command-line front end live in the companion `conv-lower` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bounds;
pub mod construct;
pub mod decompose;
pub mod error;
pub mod harness;
pub mod net;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{conv2d, PaddingMode, Kernel4, Tensor3};
