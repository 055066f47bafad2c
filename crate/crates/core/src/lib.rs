//! Bit-exact behavioral model of a multi-precision SIMD posit
//! multiply-accumulate engine.
//!
//! The engine runs Posit(8,0), Posit(16,1) and Posit(32,2) on one 32-bit
//! datapath: four P8 lanes, two P16 lanes or one P32 lane, selected by a
//! 2-bit [`Mode`]. Products accumulate exactly in per-lane [`Quire`]s and are
//! rounded once, to nearest even, on readout.
//!
//! [`reference::ref_mac`] is an independent exact-arithmetic golden model;
//! [`conformance`] drives randomized and exhaustive differential campaigns
//! against it, and [`nn`] runs small quantized networks through the engine.

pub mod conformance;
pub mod engine;
pub mod error;
pub mod nn;
pub mod posit;
pub mod quire;
pub mod reference;
pub mod simd;
pub mod trace;

pub use engine::{mac_once, Engine};
pub use error::{Error, Result};
pub use posit::{round_pack, DecodedPosit, PositClass, PositFormat, PositWord};
pub use quire::Quire;
pub use reference::ref_mac;
pub use simd::{LaneMask, Mode, SimdWord};
pub use trace::MacTrace;
