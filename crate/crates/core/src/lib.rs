//! Jammer-resilient SIMO uplink receiver simulation.
//!
//! Implements the MAED receiver (siMultaneous mitigAtion, Estimation, and
//! Detection) for an 8-antenna SIMO system under barrage, smart-data,
//! smart-pilot, and sparse jammers, in three forms:
//!
//! * [`maed_ref`] — a double-precision floating-point reference of the
//!   rearranged matrix-vector iteration, with the unrearranged formulas kept
//!   as oracles.
//! * [`maed_fx`] — a bit-accurate fixed-point pipeline mirroring an ASIC
//!   datapath: configurable Q-formats, LUT reciprocals, pseudonormalization,
//!   and power-of-two step sizes applied by arithmetic shift.
//! * [`pe_array`] — a cycle-accurate emulator of the 32-PE array (4 slices of
//!   8 PEs) that runs the same iteration via Cannon's algorithm and its
//!   Hermitian variant, bit-identical to [`maed_fx`].
//!
//! [`channel`] synthesizes the uplink, [`baselines`] provides the
//! non-mitigating LS+LMMSE receiver, and [`numerics`]/[`prng`] supply the
//! fixed-point and pseudorandom substrate.

pub mod baselines;
pub mod channel;
pub mod linalg;
pub mod maed_fx;
pub mod maed_ref;
pub mod numerics;
pub mod pe_array;
pub mod prng;

use numerics::QFormat;

/// Errors surfaced by the receiver library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("fixed-point format mismatch: {lhs} vs {rhs}")]
    FormatMismatch { lhs: QFormat, rhs: QFormat },
    #[error("xorshift state must be nonzero")]
    ZeroSeed,
    #[error("{0} must be nonzero")]
    ZeroVector(&'static str),
    #[error("reciprocal input {value} outside supported range [{lo}, {hi}]")]
    RecipOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
