//! Saturating fixed-point arithmetic restricted to the datapath primitives:
//! add, subtract, arithmetic shift, compare and clamp-at-zero. There is no
//! multiply or divide on [`FxWord`]; the type simply does not offer one.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

/// Q-format descriptor: `total_bits` signed bits, `frac_bits` of fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FxFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl FxFormat {
    /// Default datapath format: 12-bit word, Q3.8 (sign + 3 integer + 8 fraction).
    pub const DATAPATH: FxFormat = FxFormat { total_bits: 12, frac_bits: 8 };
    /// Default input format: 9-bit word, 8 fraction bits.
    pub const INPUT: FxFormat = FxFormat { total_bits: 9, frac_bits: 8 };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<FxFormat, FxError> {
        if !(4..=32).contains(&total_bits) || frac_bits >= total_bits {
            return Err(FxError::BadFormat { total_bits, frac_bits });
        }
        Ok(FxFormat { total_bits, frac_bits })
    }

    /// Largest representable raw value: 2^(total-1) - 1.
    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Smallest representable raw value: -2^(total-1).
    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Real value of one LSB, 2^-frac_bits.
    pub fn lsb(self) -> f64 {
        (self.frac_bits as f64 * -1.0).exp2()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FxError {
    #[error("invalid fixed-point format: total_bits={total_bits}, frac_bits={frac_bits}")]
    BadFormat { total_bits: u32, frac_bits: u32 },
}

/// One fixed-point scalar. `raw` is always inside the format range; every
/// operation saturates rather than wraps.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct FxWord {
    raw: i64,
    fmt: FxFormat,
}

impl PartialOrd for FxWord {
    fn partial_cmp(&self, other: &FxWord) -> Option<std::cmp::Ordering> {
        debug_assert_eq!(self.fmt, other.fmt, "comparing mixed fixed-point formats");
        self.raw.partial_cmp(&other.raw)
    }
}

impl fmt::Debug for FxWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fx({} = {})", self.raw, self.to_f64())
    }
}

impl FxWord {
    pub fn from_raw(raw: i64, fmt: FxFormat) -> FxWord {
        let clamped = raw.clamp(fmt.min_raw(), fmt.max_raw());
        FxWord { raw: clamped, fmt }
    }

    pub fn zero(fmt: FxFormat) -> FxWord {
        FxWord { raw: 0, fmt }
    }

    pub fn one(fmt: FxFormat) -> FxWord {
        quantize(1.0, fmt)
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> FxFormat {
        self.fmt
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    fn clamp_raw(self, wide: i64) -> FxWord {
        let max = self.fmt.max_raw();
        let min = self.fmt.min_raw();
        if wide > max {
            audit().note_saturation();
            FxWord { raw: max, fmt: self.fmt }
        } else if wide < min {
            audit().note_saturation();
            FxWord { raw: min, fmt: self.fmt }
        } else {
            FxWord { raw: wide, fmt: self.fmt }
        }
    }

    fn check_fmt(self, other: FxWord) {
        assert_eq!(
            self.fmt, other.fmt,
            "fixed-point format mismatch: {:?} vs {:?}",
            self.fmt, other.fmt
        );
    }

    /// Saturating addition. Exact while the sum stays in range.
    pub fn add_sat(self, other: FxWord) -> FxWord {
        self.check_fmt(other);
        audit().adds.fetch_add(1, Ordering::Relaxed);
        self.clamp_raw(self.raw + other.raw)
    }

    /// Saturating subtraction.
    pub fn sub_sat(self, other: FxWord) -> FxWord {
        self.check_fmt(other);
        audit().subs.fetch_add(1, Ordering::Relaxed);
        self.clamp_raw(self.raw - other.raw)
    }

    /// Clamp at zero: `a` if positive, else 0.
    pub fn relu(self) -> FxWord {
        audit().compares.fetch_add(1, Ordering::Relaxed);
        if self.raw > 0 {
            self
        } else {
            FxWord { raw: 0, fmt: self.fmt }
        }
    }

    /// Arithmetic right shift by `bits` (divide by 2^bits, truncating toward
    /// negative infinity).
    pub fn shr_arith(self, bits: u32) -> FxWord {
        audit().shifts.fetch_add(1, Ordering::Relaxed);
        let bits = bits.min(63);
        FxWord { raw: self.raw >> bits, fmt: self.fmt }
    }

    /// Audited compare-against-zero.
    pub fn is_strictly_positive(self) -> bool {
        audit().compares.fetch_add(1, Ordering::Relaxed);
        self.raw > 0
    }

    pub fn negate(self) -> FxWord {
        FxWord::zero(self.fmt).sub_sat(self)
    }
}

/// Quantize a real to the nearest representable value. Ties round half away
/// from zero; values outside the range saturate silently (the overflow flag
/// in the audit block is set).
pub fn quantize(value: f64, fmt: FxFormat) -> FxWord {
    let scaled = value / fmt.lsb();
    // round half away from zero
    let rounded = if scaled >= 0.0 { (scaled + 0.5).floor() } else { (scaled - 0.5).ceil() };
    let max = fmt.max_raw() as f64;
    let min = fmt.min_raw() as f64;
    if rounded > max {
        audit().note_saturation();
        FxWord { raw: fmt.max_raw(), fmt }
    } else if rounded < min {
        audit().note_saturation();
        FxWord { raw: fmt.min_raw(), fmt }
    } else {
        FxWord { raw: rounded as i64, fmt }
    }
}

/// P = floor(log2(count)) + 1, the one-based position of the highest set bit.
/// The hardware realizes this with a priority encoder; 2^P is the nearest
/// upper-bound power of two of `count`.
pub fn priority_encode(count: usize) -> u32 {
    assert!(count >= 1, "priority_encode: empty active set");
    usize::BITS - count.leading_zeros()
}

/// Global operation census. Incremented by every fixed-point primitive;
/// float-mode arithmetic bypasses it entirely.
#[derive(Debug, Default)]
pub struct AuditCounters {
    pub adds: AtomicU64,
    pub subs: AtomicU64,
    pub shifts: AtomicU64,
    pub compares: AtomicU64,
    pub multiplies: AtomicU64,
    /// Sticky flag: some operation saturated since the last reset.
    pub saturated: AtomicBool,
    /// Accumulated active-set sizes over all Newton-Raphson rounds.
    pub mp_active: AtomicU64,
    /// Accumulated MP input counts over all Newton-Raphson rounds.
    pub mp_inputs: AtomicU64,
}

impl AuditCounters {
    fn note_saturation(&self) {
        self.saturated.store(true, Ordering::Relaxed);
    }

    pub fn record_mp_round(&self, active: usize, inputs: usize) {
        self.mp_active.fetch_add(active as u64, Ordering::Relaxed);
        self.mp_inputs.fetch_add(inputs as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> AuditSnapshot {
        AuditSnapshot {
            adds: self.adds.load(Ordering::Relaxed),
            subs: self.subs.load(Ordering::Relaxed),
            shifts: self.shifts.load(Ordering::Relaxed),
            compares: self.compares.load(Ordering::Relaxed),
            multiplies: self.multiplies.load(Ordering::Relaxed),
            saturated: self.saturated.load(Ordering::Relaxed),
            mp_active: self.mp_active.load(Ordering::Relaxed),
            mp_inputs: self.mp_inputs.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.adds.store(0, Ordering::Relaxed);
        self.subs.store(0, Ordering::Relaxed);
        self.shifts.store(0, Ordering::Relaxed);
        self.compares.store(0, Ordering::Relaxed);
        self.multiplies.store(0, Ordering::Relaxed);
        self.saturated.store(false, Ordering::Relaxed);
        self.mp_active.store(0, Ordering::Relaxed);
        self.mp_inputs.store(0, Ordering::Relaxed);
    }
}

/// Point-in-time copy of the audit counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct AuditSnapshot {
    pub adds: u64,
    pub subs: u64,
    pub shifts: u64,
    pub compares: u64,
    pub multiplies: u64,
    pub saturated: bool,
    pub mp_active: u64,
    pub mp_inputs: u64,
}

static AUDIT: AuditCounters = AuditCounters {
    adds: AtomicU64::new(0),
    subs: AtomicU64::new(0),
    shifts: AtomicU64::new(0),
    compares: AtomicU64::new(0),
    multiplies: AtomicU64::new(0),
    saturated: AtomicBool::new(false),
    mp_active: AtomicU64::new(0),
    mp_inputs: AtomicU64::new(0),
};

pub fn audit() -> &'static AuditCounters {
    &AUDIT
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q3_8: FxFormat = FxFormat::DATAPATH;

    #[test]
    fn quantize_exact_and_lsb() {
        assert_eq!(quantize(0.5, Q3_8).raw(), 128);
        assert_eq!(quantize(-1.0 / 256.0, Q3_8).raw(), -1);
        assert_eq!(quantize(0.0, Q3_8).raw(), 0);
    }

    #[test]
    fn quantize_saturates() {
        assert_eq!(quantize(10.0, Q3_8).raw(), 2047);
        assert_eq!(quantize(-10.0, Q3_8).raw(), -2048);
        assert!((quantize(10.0, Q3_8).to_f64() - 7.99609375).abs() < 1e-12);
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        // 0.5 LSB above an even raw value
        let half_lsb = Q3_8.lsb() / 2.0;
        assert_eq!(quantize(half_lsb, Q3_8).raw(), 1);
        assert_eq!(quantize(-half_lsb, Q3_8).raw(), -1);
    }

    #[test]
    fn add_sub_saturate_at_bounds() {
        let max = FxWord::from_raw(Q3_8.max_raw(), Q3_8);
        let min = FxWord::from_raw(Q3_8.min_raw(), Q3_8);
        let lsb = FxWord::from_raw(1, Q3_8);
        assert_eq!(max.add_sat(lsb), max);
        assert_eq!(min.sub_sat(lsb), min);
        let a = quantize(0.25, Q3_8);
        let b = quantize(0.5, Q3_8);
        assert_eq!(a.add_sat(b).to_f64(), 0.75);
    }

    #[test]
    #[should_panic(expected = "format mismatch")]
    fn mixed_formats_rejected() {
        let a = FxWord::zero(Q3_8);
        let b = FxWord::zero(FxFormat::INPUT);
        let _ = a.add_sat(b);
    }

    #[test]
    fn relu_behaviour() {
        assert_eq!(quantize(-0.3, Q3_8).relu().raw(), 0);
        let x = quantize(0.7, Q3_8);
        assert_eq!(x.relu(), x);
        assert_eq!(FxWord::zero(Q3_8).relu().raw(), 0);
    }

    #[test]
    fn priority_encoder() {
        assert_eq!(priority_encode(1), 1);
        assert_eq!(priority_encode(4), 3);
        assert_eq!(priority_encode(7), 3);
        assert_eq!(priority_encode(8), 4);
    }

    #[test]
    #[should_panic(expected = "empty active set")]
    fn priority_encode_rejects_zero() {
        priority_encode(0);
    }

    #[test]
    fn quantize_monotone() {
        let mut prev = quantize(-9.0, Q3_8);
        let mut x = -9.0;
        while x < 9.0 {
            let q = quantize(x, Q3_8);
            assert!(q >= prev);
            prev = q;
            x += 0.013;
        }
    }

    #[test]
    fn shift_is_arithmetic() {
        assert_eq!(FxWord::from_raw(-8, Q3_8).shr_arith(2).raw(), -2);
        assert_eq!(FxWord::from_raw(7, Q3_8).shr_arith(1).raw(), 3);
    }
}
