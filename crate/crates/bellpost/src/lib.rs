//! bellpost: how postselection turns locally-causal statistics into
//! CHSH-violating ones, at desk scale.
//!
//! The crate has three legs:
//!
//! * a classical threshold-readout source ([`classical`]) with a quadrature
//!   oracle ([`oracle`]) and CHSH bookkeeping ([`chsh`]): the ridiculously
//!   simple model where discarding null results inflates CHSH to 4;
//! * a small dense complex-matrix engine ([`quantum`]) for singlet and
//!   Werner states, projector statistics, CHSH maximization, and the
//!   partial-transpose witness;
//! * Werner's hidden-variable model ([`werner`]) and the sequential
//!   coarse-then-fine measurement engine ([`sequential`]) with a settings
//!   search that contrasts the quantum and hidden-variable sides.
//!
//! Everything is seeded and counter-streamed: identical inputs give
//! byte-identical outputs, in parallel or not.

pub mod chsh;
pub mod classical;
pub mod config;
pub mod csvout;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod quantum;
pub mod rng;
pub mod sequential;
pub mod werner;

pub use error::{Error, Result};
