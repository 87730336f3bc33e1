//! Deterministic, seedable simulator of a PAM-4 intensity-modulation /
//! direct-detection optical link.
//!
//! The chain is `framing -> txdsp -> channel -> rxdsp -> metrics`, driven by
//! [`harness`]. Each simulated frame is one period of a looped AWG pattern,
//! so every filter in the chain is applied circularly in the FFT domain.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with bad
// values; matrix code reads better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod dsp;
pub mod error;
pub mod framing;
pub mod harness;
pub mod metrics;
pub mod rxdsp;
pub mod signal;
pub mod txdsp;

pub use error::{Error, Result};
