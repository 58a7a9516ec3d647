//! The datapath abstraction. Everything above the arithmetic layer is
//! generic over [`Scalar`]; the two implementations are `f64` (float mode,
//! used for oracles and gradient checks, bypasses the audit) and
//! [`FxWord`] (the hardware-faithful saturating fixed-point path).

use crate::fxp::{audit, priority_encode, quantize, FxFormat, FxWord};
use crate::mp::{mp_exact, mp_newton, MpConfig, MpResult};

pub trait Scalar: Copy + PartialEq + PartialOrd + std::fmt::Debug + Send + Sync {
    fn zero_like(self) -> Self;
    fn one_like(self) -> Self;
    fn add_sat(self, rhs: Self) -> Self;
    fn sub_sat(self, rhs: Self) -> Self;
    fn relu(self) -> Self;
    /// Divide by 2^bits (arithmetic shift on the fixed path).
    fn shr_approx(self, bits: u32) -> Self;
    /// Divide by `count`. Exact reciprocal in float mode; on the fixed path
    /// a right-shift by the priority-encoded power of two, 2^P >= count.
    fn scale_recip_count(self, count: usize) -> Self;
    fn is_strictly_positive(self) -> bool;
    fn negate(self) -> Self;
    fn to_f64(self) -> f64;
    /// Convert a real into this scalar's domain (quantizing on the fixed path).
    fn from_f64_like(self, value: f64) -> Self;
    /// Quantization step; 0 for the float path.
    fn lsb(self) -> f64;
    /// Record one Newton-Raphson round's active-set occupancy (fixed path only).
    fn record_mp_round(active: usize, inputs: usize);
    /// Solve the MP constraint for this scalar type.
    fn mp_solve(xs: &[Self], gamma: Self, cfg: &MpConfig) -> MpResult<Self>;
}

impl Scalar for f64 {
    fn zero_like(self) -> f64 {
        0.0
    }
    fn one_like(self) -> f64 {
        1.0
    }
    fn add_sat(self, rhs: f64) -> f64 {
        self + rhs
    }
    fn sub_sat(self, rhs: f64) -> f64 {
        self - rhs
    }
    fn relu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn shr_approx(self, bits: u32) -> f64 {
        self / (bits as f64).exp2()
    }
    fn scale_recip_count(self, count: usize) -> f64 {
        self / count as f64
    }
    fn is_strictly_positive(self) -> bool {
        self > 0.0
    }
    fn negate(self) -> f64 {
        -self
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64_like(self, value: f64) -> f64 {
        value
    }
    fn lsb(self) -> f64 {
        0.0
    }
    fn record_mp_round(_active: usize, _inputs: usize) {}
    fn mp_solve(xs: &[f64], gamma: f64, cfg: &MpConfig) -> MpResult<f64> {
        if cfg.exact {
            mp_exact(xs, gamma)
        } else {
            mp_newton(xs, gamma, cfg)
        }
    }
}

impl Scalar for FxWord {
    fn zero_like(self) -> FxWord {
        FxWord::zero(self.format())
    }
    fn one_like(self) -> FxWord {
        FxWord::one(self.format())
    }
    fn add_sat(self, rhs: FxWord) -> FxWord {
        FxWord::add_sat(self, rhs)
    }
    fn sub_sat(self, rhs: FxWord) -> FxWord {
        FxWord::sub_sat(self, rhs)
    }
    fn relu(self) -> FxWord {
        FxWord::relu(self)
    }
    fn shr_approx(self, bits: u32) -> FxWord {
        self.shr_arith(bits)
    }
    fn scale_recip_count(self, count: usize) -> FxWord {
        self.shr_arith(priority_encode(count))
    }
    fn is_strictly_positive(self) -> bool {
        FxWord::is_strictly_positive(self)
    }
    fn negate(self) -> FxWord {
        FxWord::negate(self)
    }
    fn to_f64(self) -> f64 {
        FxWord::to_f64(self)
    }
    fn from_f64_like(self, value: f64) -> FxWord {
        quantize(value, self.format())
    }
    fn lsb(self) -> f64 {
        self.format().lsb()
    }
    fn record_mp_round(active: usize, inputs: usize) {
        audit().record_mp_round(active, inputs);
    }
    fn mp_solve(xs: &[FxWord], gamma: FxWord, cfg: &MpConfig) -> MpResult<FxWord> {
        assert!(!cfg.exact, "exact MP solve is float-mode only");
        mp_newton(xs, gamma, cfg)
    }
}

/// Quantize a real vector into a given format.
pub fn quantize_vec(values: &[f64], fmt: FxFormat) -> Vec<FxWord> {
    values.iter().map(|&v| quantize(v, fmt)).collect()
}
