//! Energy-efficient hybrid precoding for massive-MIMO LEO satellite
//! downlinks with twin-resolution phase-shifting networks and nonlinear
//! power amplifiers.
//!
//! The pipeline is:
//!
//! 1. [`channel`] builds statistical CSI (UPA steering vectors, Rician gains).
//! 2. [`digital_opt`] maximizes energy efficiency over a fully digital
//!    precoder `B` under a PA power budget, with the amplifier modelled by
//!    its Bussgang decomposition ([`npa`]).
//! 3. [`hybrid`] factors `B ≈ V W` with a quantized twin-resolution analog
//!    network `V`, fully or partially connected.
//! 4. [`experiment`] runs sweeps from scenario files and writes CSV.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

pub mod bisect;
pub mod channel;
pub mod digital_opt;
pub mod error;
pub mod experiment;
pub mod hybrid;
pub mod npa;
pub mod power;
pub mod precoder;
pub mod rate;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{CMatrix, CVector, Scalar};

pub use channel::{ArrayGeometry, UserChannelStats};
pub use digital_opt::{DinkelbachTrace, EeProblem, SolverConfig};
pub use hybrid::{HybridPrecoder, PhaseSet, TrpsNetwork};
pub use npa::NpaModel;
pub use power::{ArchitectureKind, ArchitectureSpec, ComponentPowers};
pub use precoder::DigitalPrecoder;
pub use rate::{LinkContext, RateBreakdown};

pub type Complex64 = nalgebra::Complex<f64>;

pub type DigitalPrecoder64 = DigitalPrecoder<f64>;
pub type HybridPrecoder64 = HybridPrecoder<f64>;
pub type NpaModel64 = NpaModel<f64>;
pub type LinkContext64 = LinkContext<f64>;
pub type UserChannelStats64 = UserChannelStats<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type ComponentPowers64 = ComponentPowers<f64>;
pub type TrpsNetwork64 = TrpsNetwork<f64>;

pub type DigitalPrecoder32 = DigitalPrecoder<f32>;
pub type NpaModel32 = NpaModel<f32>;
pub type LinkContext32 = LinkContext<f32>;
