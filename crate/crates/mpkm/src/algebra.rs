//! Differential encoding and the three inner-product realizations: exact
//! (oracle), log-sum-exp reference, and the multiplierless MP approximation.

use num_traits::Float;

use crate::mp::MpConfig;
use crate::scalar::Scalar;

/// Paired nonnegative vectors with componentwise plus + minus = 1, encoding
/// a signed vector in [-1, 1] as plus - minus.
#[derive(Debug, Clone)]
pub struct DifferentialVector<S> {
    pub plus: Vec<S>,
    pub minus: Vec<S>,
}

impl<S: Scalar> DifferentialVector<S> {
    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    pub fn decode(&self) -> Vec<f64> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(&p, &m)| p.to_f64() - m.to_f64())
            .collect()
    }

    /// Componentwise plus + minus = 1 within `tol` (1 LSB in fixed point).
    pub fn constraint_holds(&self, tol: f64) -> bool {
        self.plus
            .iter()
            .zip(&self.minus)
            .all(|(&p, &m)| (p.to_f64() + m.to_f64() - 1.0).abs() <= tol)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AlgebraError {
    #[error("input component {index} = {value} outside [-1, 1]; normalize first")]
    OutOfRange { index: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Encode x in [-1,1]^d as plus = (1+x)/2, minus = (1-x)/2, using only
/// add/sub and one right shift per component. `proto` supplies the target
/// scalar domain (format in fixed point).
pub fn encode_differential<S: Scalar>(
    x: &[f64],
    proto: S,
) -> Result<DifferentialVector<S>, AlgebraError> {
    let mut plus = Vec::with_capacity(x.len());
    let mut minus = Vec::with_capacity(x.len());
    let one = proto.one_like();
    for (index, &value) in x.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) {
            return Err(AlgebraError::OutOfRange { index, value });
        }
        let q = proto.from_f64_like(value);
        plus.push(one.add_sat(q).shr_approx(1));
        minus.push(one.sub_sat(q).shr_approx(1));
    }
    Ok(DifferentialVector { plus, minus })
}

/// Exact inner product, float mode only. This is the oracle side of the
/// approximation pair and is exempt from the no-multiply audit.
pub fn inner_product_exact(w: &[f64], x: &[f64]) -> Result<f64, AlgebraError> {
    if w.len() != x.len() {
        return Err(AlgebraError::LengthMismatch { left: w.len(), right: x.len() });
    }
    Ok(w.iter().zip(x).map(|(a, b)| a * b).sum())
}

/// Smooth log-sum-exp over +/-u with temperature gamma:
/// gamma * log sum_i (e^{u_i/gamma} + e^{-u_i/gamma}), computed stably.
fn lse_sym<F: Float>(u: &[F], gamma: F) -> F {
    let mut hi = F::neg_infinity();
    for &v in u {
        let a = v / gamma;
        hi = hi.max(a.abs());
    }
    let mut sum = F::zero();
    for &v in u {
        let a = v / gamma;
        sum = sum + (a - hi).exp() + (-a - hi).exp();
    }
    gamma * (hi + sum.ln())
}

/// Log-sum-exp reference approximation of the inner product:
/// 0.5 * [f(w+x) - f(w-x)] with f the symmetric LSE above.
pub fn inner_product_lse<F: Float>(w: &[F], x: &[F], gamma: F) -> Result<F, AlgebraError> {
    if w.len() != x.len() {
        return Err(AlgebraError::LengthMismatch { left: w.len(), right: x.len() });
    }
    let sum: Vec<F> = w.iter().zip(x).map(|(&a, &b)| a + b).collect();
    let diff: Vec<F> = w.iter().zip(x).map(|(&a, &b)| a - b).collect();
    let half = F::from(0.5).unwrap();
    Ok(half * (lse_sym(&sum, gamma) - lse_sym(&diff, gamma)))
}

/// Multiplierless MP approximation of the inner product:
/// MP([w+x, -w-x], gamma) - MP([w-x, -w+x], gamma).
pub fn inner_product_mp<S: Scalar>(
    w: &[S],
    x: &[S],
    gamma: S,
    cfg: &MpConfig,
) -> Result<S, AlgebraError> {
    if w.len() != x.len() {
        return Err(AlgebraError::LengthMismatch { left: w.len(), right: x.len() });
    }
    let mut pos = Vec::with_capacity(2 * w.len());
    let mut neg = Vec::with_capacity(2 * w.len());
    for (&a, &b) in w.iter().zip(x) {
        let s = a.add_sat(b);
        pos.push(s);
        let d = a.sub_sat(b);
        neg.push(d);
    }
    for i in 0..w.len() {
        pos.push(pos[i].negate());
        neg.push(neg[i].negate());
    }
    let zp = S::mp_solve(&pos, gamma, cfg).z;
    let zn = S::mp_solve(&neg, gamma, cfg).z;
    Ok(zp.sub_sat(zn))
}
