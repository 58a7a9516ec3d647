//! Multiplierless margin-propagation kernel machine.
//!
//! The datapath is generic over [`scalar::Scalar`]; the two concrete
//! instantiations are a float reference path and a saturating fixed-point
//! path whose only primitives are add, subtract, shift, and compare.

pub mod algebra;
pub mod costmodel;
pub mod datasets;
pub mod eval;
pub mod fxp;
pub mod kernel;
pub mod model;
pub mod mp;
pub mod scalar;
pub mod trainer;

/// Float reference scalar.
pub type Real = f64;

/// Fixed-point datapath scalar (Q3.8 in 12 bits by default).
pub type Fx = fxp::FxWord;

/// Prototype value for the default fixed-point datapath format.
pub fn fx_proto() -> Fx {
    fxp::FxWord::zero(fxp::FxFormat::DATAPATH)
}
