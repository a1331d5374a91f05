//! Likelihood inference for packet renewal models observed only through
//! NetFlow summaries, with or without packet sampling.
//!
//! The crate builds without `std` (it needs `alloc`); the default `std`
//! feature adds wall-clock timing to fit results.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod efficiency;
pub mod empirical;
pub mod error;
pub mod estimate;
pub mod likelihood;
pub mod matrix;
pub mod model;
pub mod netflow;
pub mod optimize;
pub mod oracle;
pub mod pmf;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use likelihood::LikelihoodConfig;
pub use model::{ConvolutionMode, ConvolutionPolicy, Family, PacketModel};
pub use netflow::{NetFlow, SampledNetFlow, SessionNetFlow};
pub use pmf::FlowSizePmf;
pub use simulate::{Flow, SessionConfig, ThinnedFlow};
