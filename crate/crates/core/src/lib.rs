//! Floquet-Bloch laboratory for time-periodically driven periodic Schrödinger operators.

// `!(x > 0)` is the NaN-rejecting form of a positivity check, used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod config;
pub mod drive;
pub mod effective;
pub mod error;
pub mod evolve;
pub mod lattice;
pub mod linalg;
pub mod scalar;
pub mod selftest;
pub mod spectral;
pub mod wavepacket;

pub use error::{Error, ErrorKind, Result};
pub use scalar::{Cplx, Real};

/// Double-precision instantiations.
pub type Lattice = lattice::Lattice<f64>;
pub type Crystal = bloch::Crystal<f64>;
pub type DrivingProfile = drive::DrivingProfile<f64>;
pub type Monodromy = evolve::Monodromy<f64>;
pub type SpectralArc = spectral::Arc<f64>;
pub type FiberBundle = spectral::FiberBundle<f64>;
pub type ModeFrame = wavepacket::ModeFrame<f64>;
pub type Envelope = wavepacket::Envelope<f64>;
pub type EffectiveModel = effective::EffectiveModel<f64>;
pub type Scenario = config::Scenario<f64>;
