//! MP kernel computation and the inference forward pass.
//!
//! The kernel similarity is the MP approximation of (x_s - x)^2/2 + 2,
//! evaluated over six shift/add terms per feature dimension. The forward
//! pass stacks three MP evaluations (z+, z-, then a two-input normalization
//! MP) and records everything the trainer needs: active-set sizes and the
//! per-input sign bits.

use crate::algebra::{AlgebraError, DifferentialVector};
use crate::mp::MpConfig;
use crate::scalar::Scalar;

/// The fixed set of training samples the kernel is computed against.
#[derive(Debug, Clone)]
pub struct StoredVectors<S> {
    pub rows: Vec<DifferentialVector<S>>,
}

impl<S: Scalar> StoredVectors<S> {
    pub fn count(&self) -> usize {
        self.rows.len()
    }

    pub fn dims(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

/// K- per stored vector; K+ is defined as -K- elementwise.
#[derive(Debug, Clone)]
pub struct KernelVector<S> {
    pub k_minus: Vec<S>,
}

impl<S: Scalar> KernelVector<S> {
    pub fn k_plus(&self) -> Vec<S> {
        self.k_minus.iter().map(|&k| k.negate()).collect()
    }
}

/// Trainable state: one weight pair per stored vector plus scalar biases.
#[derive(Debug, Clone)]
pub struct ModelParams<S> {
    pub w_plus: Vec<S>,
    pub w_minus: Vec<S>,
    pub b_plus: S,
    pub b_minus: S,
    pub gamma1: S,
}

impl<S: Scalar> ModelParams<S> {
    /// Symmetric all-zero start; p = 0 for every input.
    pub fn zeros(count: usize, gamma1: S, proto: S) -> ModelParams<S> {
        let zero = proto.zero_like();
        ModelParams {
            w_plus: vec![zero; count],
            w_minus: vec![zero; count],
            b_plus: zero,
            b_minus: zero,
            gamma1,
        }
    }

    pub fn count(&self) -> usize {
        self.w_plus.len()
    }
}

/// gamma_2 for the kernel MP and gamma_n (fixed at 1) for normalization;
/// gamma_1 lives in the model since annealing updates it.
#[derive(Debug, Clone, Copy)]
pub struct GammaParams<S> {
    pub gamma2: S,
    pub gamma_n: S,
}

impl<S: Scalar> GammaParams<S> {
    pub fn new(gamma2: S) -> GammaParams<S> {
        GammaParams { gamma2, gamma_n: gamma2.one_like() }
    }
}

/// Everything one forward pass produces, including the indicator bits the
/// gradient equations read off the three MP evaluations.
#[derive(Debug, Clone)]
pub struct InferenceTrace<S> {
    pub z_plus: S,
    pub z_minus: S,
    pub z: S,
    pub p_plus: S,
    pub p_minus: S,
    pub p: S,
    /// |S_p|: active-set size of the z+ MP.
    pub sp_count: usize,
    /// |S_n|: active-set size of the z- MP.
    pub sn_count: usize,
    /// |S|: active-set size of the normalization MP (1 or 2).
    pub s_count: usize,
    /// Membership bits of the z+ MP inputs, laid out as
    /// [w+ + K+ (count), w- + K- (count), b+].
    pub mask_zp: Vec<bool>,
    /// Membership bits of the z- MP inputs:
    /// [w+ + K- (count), w- + K+ (count), b-].
    pub mask_zn: Vec<bool>,
    /// I_(z+) = 1(z+ > z), I_(z-) = 1(z- > z).
    pub i_zp: bool,
    pub i_zn: bool,
}

/// Class decision: positive iff p > 0. A tie (p = 0) reports negative with
/// the flag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub positive: bool,
    pub tie: bool,
}

/// Kernel MP for one stored vector: MP over the 6d terms
/// [2xs+, 2xs-, 2x+, 2x-, xs+ + x- + 2, xs- + x+ + 2] with gamma_2.
/// Doubling and the +2 offset use only add/shift.
pub fn compute_kernel_minus<S: Scalar>(
    x: &DifferentialVector<S>,
    xs: &DifferentialVector<S>,
    gamma2: S,
    cfg: &MpConfig,
) -> Result<S, AlgebraError> {
    if x.len() != xs.len() {
        return Err(AlgebraError::LengthMismatch { left: x.len(), right: xs.len() });
    }
    let one = gamma2.one_like();
    let two = one.add_sat(one);
    let mut terms = Vec::with_capacity(6 * x.len());
    for d in 0..x.len() {
        let (xp, xm) = (x.plus[d], x.minus[d]);
        let (sp, sm) = (xs.plus[d], xs.minus[d]);
        terms.push(sp.add_sat(sp));
        terms.push(sm.add_sat(sm));
        terms.push(xp.add_sat(xp));
        terms.push(xm.add_sat(xm));
        terms.push(sp.add_sat(xm).add_sat(two));
        terms.push(sm.add_sat(xp).add_sat(two));
    }
    Ok(S::mp_solve(&terms, gamma2, cfg).z)
}

/// Kernel MP against every stored vector.
pub fn compute_kernel_vector<S: Scalar>(
    x: &DifferentialVector<S>,
    stored: &StoredVectors<S>,
    gamma2: S,
    cfg: &MpConfig,
) -> Result<KernelVector<S>, AlgebraError> {
    let mut k_minus = Vec::with_capacity(stored.count());
    for row in &stored.rows {
        k_minus.push(compute_kernel_minus(x, row, gamma2, cfg)?);
    }
    Ok(KernelVector { k_minus })
}

/// Full forward pass from a precomputed kernel vector.
pub fn forward_from_kernel<S: Scalar>(
    kernel: &KernelVector<S>,
    params: &ModelParams<S>,
    gammas: &GammaParams<S>,
    cfg: &MpConfig,
) -> InferenceTrace<S> {
    let count = params.count();
    assert_eq!(kernel.k_minus.len(), count, "kernel/model dimension mismatch");
    let k_plus = kernel.k_plus();

    let mut inputs_p = Vec::with_capacity(2 * count + 1);
    let mut inputs_n = Vec::with_capacity(2 * count + 1);
    for i in 0..count {
        inputs_p.push(params.w_plus[i].add_sat(k_plus[i]));
        inputs_n.push(params.w_plus[i].add_sat(kernel.k_minus[i]));
    }
    for i in 0..count {
        inputs_p.push(params.w_minus[i].add_sat(kernel.k_minus[i]));
        inputs_n.push(params.w_minus[i].add_sat(k_plus[i]));
    }
    inputs_p.push(params.b_plus);
    inputs_n.push(params.b_minus);

    let sol_p = S::mp_solve(&inputs_p, params.gamma1, cfg);
    let sol_n = S::mp_solve(&inputs_n, params.gamma1, cfg);
    let (z_plus, z_minus) = (sol_p.z, sol_n.z);

    // The two-input normalization MP has an exact add/shift closed form;
    // using it keeps p+ + p- within one LSB of gamma_n on the fixed path.
    let sol_norm = crate::mp::mp_two(z_plus, z_minus, gammas.gamma_n);
    let z = sol_norm.z;
    let p_plus = z_plus.sub_sat(z).relu();
    let p_minus = z_minus.sub_sat(z).relu();

    InferenceTrace {
        z_plus,
        z_minus,
        z,
        p_plus,
        p_minus,
        p: p_plus.sub_sat(p_minus),
        sp_count: sol_p.active_count,
        sn_count: sol_n.active_count,
        s_count: sol_norm.active_count,
        mask_zp: sol_p.active_mask,
        mask_zn: sol_n.active_mask,
        i_zp: sol_norm.active_mask[0],
        i_zn: sol_norm.active_mask[1],
    }
}

/// Kernel computation plus forward pass for a raw differential input.
pub fn forward<S: Scalar>(
    x: &DifferentialVector<S>,
    stored: &StoredVectors<S>,
    params: &ModelParams<S>,
    gammas: &GammaParams<S>,
    cfg: &MpConfig,
) -> Result<InferenceTrace<S>, AlgebraError> {
    let kernel = compute_kernel_vector(x, stored, gammas.gamma2, cfg)?;
    Ok(forward_from_kernel(&kernel, params, gammas, cfg))
}

pub fn predict<S: Scalar>(trace: &InferenceTrace<S>) -> Prediction {
    let positive = trace.p.is_strictly_positive();
    let tie = trace.p == trace.p.zero_like();
    Prediction { positive, tie }
}
