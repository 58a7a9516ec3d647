//! The margin-propagation function: z solving sum_i [x_i - z]_+ = gamma.
//!
//! Two solvers share the [`MpResult`] record. [`mp_exact`] is the
//! reverse-water-filling closed form used as the oracle; [`mp_newton`] is
//! the hardware-faithful fixed-round recursion whose division is a right
//! shift by a priority-encoded power of two.

use num_traits::Float;

use crate::scalar::Scalar;

/// Constraint convention. `Plain` is the canonical sum_i [x_i - z]_+ = gamma.
/// `Shifted` reproduces the offset form sum_i [x_i - z + gamma]_+ = gamma
/// literally; it is the same solver applied to inputs shifted by +gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    Plain,
    Shifted,
}

#[derive(Debug, Clone)]
pub struct MpConfig {
    /// Newton-Raphson rounds; fixed, no early exit.
    pub rounds: u32,
    pub convention: Convention,
    /// Float mode only: solve with the closed form instead of the recursion.
    pub exact: bool,
}

impl Default for MpConfig {
    fn default() -> Self {
        MpConfig { rounds: 10, convention: Convention::Plain, exact: false }
    }
}

impl MpConfig {
    pub fn exact() -> Self {
        MpConfig { exact: true, ..MpConfig::default() }
    }
}

/// Solution record of one MP evaluation.
#[derive(Debug, Clone)]
pub struct MpResult<S> {
    pub z: S,
    /// |S|: number of inputs strictly above z at the solution.
    pub active_count: usize,
    /// Bit per input: x_i > z.
    pub active_mask: Vec<bool>,
    /// Sign bit per input of x_i - z (+ offset) at the final round. With the
    /// plain convention this coincides with `active_mask`.
    pub val_signs: Vec<bool>,
}

/// Closed-form MP via reverse water filling: sort descending and scan prefix
/// sums until z = (sum_{i<=k} x_i - gamma)/k is consistent with
/// x_(k) > z >= x_(k+1). Float mode only; exempt from the datapath audit.
pub fn mp_exact<F: Float>(xs: &[F], gamma: F) -> MpResult<F> {
    assert!(!xs.is_empty(), "mp_exact: empty input");
    assert!(gamma > F::zero(), "mp_exact: gamma must be positive");
    let mut sorted: Vec<F> = xs.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("mp_exact: non-finite input"));
    let mut prefix = F::zero();
    let mut z = sorted[0] - gamma;
    let n = sorted.len();
    for k in 0..n {
        prefix = prefix + sorted[k];
        let count = F::from(k + 1).unwrap();
        let candidate = (prefix - gamma) / count;
        if sorted[k] > candidate && (k + 1 == n || candidate >= sorted[k + 1]) {
            z = candidate;
            break;
        }
    }
    let active_mask: Vec<bool> = xs.iter().map(|&x| x > z).collect();
    let active_count = active_mask.iter().filter(|&&b| b).count();
    MpResult { z, active_count, val_signs: active_mask.clone(), active_mask }
}

/// Fixed-round Newton-Raphson MP solver using only add/sub/shift/compare.
///
/// z starts at max(x) - gamma, which keeps the active set nonempty in every
/// round, and each update z += (sum [x_i - z]_+ - gamma) >> P approaches the
/// root from below (2^P >= |S| damps the step).
pub fn mp_newton<S: Scalar>(xs: &[S], gamma: S, cfg: &MpConfig) -> MpResult<S> {
    assert!(!xs.is_empty(), "mp_newton: empty input");
    assert!(gamma.is_strictly_positive(), "mp_newton: gamma must be positive");
    let shifted: Vec<S>;
    let xs = match cfg.convention {
        Convention::Plain => xs,
        Convention::Shifted => {
            shifted = xs.iter().map(|&x| x.add_sat(gamma)).collect();
            &shifted
        }
    };

    let max = xs.iter().copied().fold(xs[0], |m, x| if x > m { x } else { m });
    let mut z = max.sub_sat(gamma);
    for _ in 0..cfg.rounds {
        let mut acc = z.zero_like();
        let mut count = 0usize;
        for &x in xs {
            let val = x.sub_sat(z);
            if val.is_strictly_positive() {
                acc = acc.add_sat(val);
                count += 1;
            }
        }
        assert!(count >= 1, "mp_newton: active set emptied (unreachable by construction)");
        S::record_mp_round(count, xs.len());
        // 1/|S| is an exact reciprocal in float mode and the priority-encoded
        // right shift on the fixed path.
        z = z.add_sat(acc.sub_sat(gamma).scale_recip_count(count));
    }
    let val_signs: Vec<bool> = xs.iter().map(|&x| x.sub_sat(z).is_strictly_positive()).collect();
    let active_count = val_signs.iter().filter(|&&b| b).count();
    MpResult { z, active_count, active_mask: val_signs.clone(), val_signs }
}

/// Exact two-input MP using only add/sub/compare and one right shift: if the
/// inputs are within gamma of each other both are active and
/// z = (x_1 + x_2 - gamma)/2, otherwise z = max - gamma with a singleton
/// active set. The iterative solver's damped step (shift by
/// priority_encode(2) = 2) can stall up to 3 LSB from the root, which would
/// break the normalization invariant p+ + p- = gamma_n; the closed form is
/// just as hardware-friendly and keeps the residual within one LSB.
pub fn mp_two<S: Scalar>(a: S, b: S, gamma: S) -> MpResult<S> {
    assert!(gamma.is_strictly_positive(), "mp_two: gamma must be positive");
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    // z = (a + b - gamma)/2 rewritten around hi so the intermediate stays in
    // range even when a + b would saturate the fixed format.
    let z = if lo.add_sat(gamma) > hi {
        hi.sub_sat(hi.sub_sat(lo).add_sat(gamma).shr_approx(1))
    } else {
        hi.sub_sat(gamma)
    };
    let mask = vec![a.sub_sat(z).is_strictly_positive(), b.sub_sat(z).is_strictly_positive()];
    MpResult {
        z,
        active_count: mask.iter().filter(|&&m| m).count(),
        active_mask: mask.clone(),
        val_signs: mask,
    }
}

/// Analytic partial derivative of the MP threshold: dz/dx_i = 1(x_i > z)/|S|.
/// Undefined at ties x_i = z; the subgradient choice 0 is returned and the
/// tie flagged.
pub fn mp_partial(xs: &[f64], gamma: f64, index: usize) -> (f64, bool) {
    let sol = mp_exact(xs, gamma);
    let tie = (xs[index] - sol.z).abs() <= 1e-12 * (1.0 + xs[index].abs());
    if tie {
        return (0.0, true);
    }
    if xs[index] > sol.z {
        (1.0 / sol.active_count as f64, false)
    } else {
        (0.0, false)
    }
}
