//! Dual-polarization fiber channel simulation and receiver-side
//! digital backpropagation (DBP).
//!
//! The crate covers the whole desk-scale chain: PM-QPSK generation, Manakov
//! split-step propagation over an amplified multi-span link, frequency-domain
//! dispersion compensation, conventional and enhanced split-step DBP inside an
//! overlap-and-save framer, numerical fitting of the enhanced nonlinear-step
//! coefficients, an analytic operation-count model, and the coherent receiver
//! back end (butterfly CMA, carrier recovery, BER).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod channel;
pub mod costmodel;
pub mod dbp;
pub mod error;
pub mod modem;
pub mod sigkit;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use sigkit::{AmpGain, DualPolSignal, EssfmCoefficients, FiberParams, LinkConfig};
