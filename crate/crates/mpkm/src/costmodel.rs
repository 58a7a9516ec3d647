//! Symbolic energy/complexity formulas and reconciliation against the
//! measured operation census.

use crate::fxp::AuditSnapshot;

/// Per-operation energy in picojoules. The multiply and add values are the
/// published 45 nm figures (0.2 pJ and 0.03 pJ); the compare cost is only
/// stated to be below an add, so its default here is a configurable choice,
/// not a published number.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EnergyConstants {
    pub c_mult: f64,
    pub c_add: f64,
    pub c_cmp: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants { c_mult: 0.2, c_add: 0.03, c_cmp: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CostParams {
    /// Matrix/vector dimension.
    pub m: u64,
    /// Newton-Raphson rounds.
    pub r: u64,
    /// Sparsity factor: fraction of MP inputs in the active set, in (0, 1].
    pub f: f64,
}

/// MVM of a 1xM vector with an MxM matrix: M^2 multiplies, M^2 - M adds.
pub fn cost_mvm(p: &CostParams, e: &EnergyConstants) -> f64 {
    let m = p.m as f64;
    m * m * e.c_mult + (m * m - m) * e.c_add
}

/// MP approximation of the same MVM: (M^2 + M*F*R) adds and M*R compares.
/// The M*F*R term counts the active-set accumulations inside the
/// Newton-Raphson rounds (one add per active input per round); the compares
/// are the per-input sign checks.
pub fn cost_mp(p: &CostParams, e: &EnergyConstants) -> f64 {
    let (m, r) = (p.m as f64, p.r as f64);
    (m * m + m * p.f * r) * e.c_add + m * r * e.c_cmp
}

/// Kernel machine: (M^2 + M) multiplies, (M^2 + M - 1) adds.
pub fn cost_km(p: &CostParams, e: &EnergyConstants) -> f64 {
    let m = p.m as f64;
    (m * m + m) * e.c_mult + (m * m + m - 1.0) * e.c_add
}

/// Kernel machine in the MP domain: (F*R*M + 2M^2 + 1) adds, R*M compares.
pub fn cost_mpkm(p: &CostParams, e: &EnergyConstants) -> f64 {
    let (m, r) = (p.m as f64, p.r as f64);
    (p.f * r * m + 2.0 * m * m + 1.0) * e.c_add + r * m * e.c_cmp
}

/// Measured fraction of MP inputs in the active set, averaged over every
/// Newton-Raphson round recorded since the last audit reset.
pub fn estimate_sparsity(snapshot: &AuditSnapshot) -> Option<f64> {
    if snapshot.mp_inputs == 0 {
        return None;
    }
    Some(snapshot.mp_active as f64 / snapshot.mp_inputs as f64)
}

/// Measured operation counts priced with the energy constants. Shifts are
/// costed as free (wiring); saturation costs nothing by construction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CostReport {
    pub counters: AuditSnapshot,
    pub energy: EnergyConstants,
    pub add_sub_pj: f64,
    pub compare_pj: f64,
    pub multiply_pj: f64,
    pub total_pj: f64,
    pub measured_sparsity: Option<f64>,
}

pub fn audit_report(snapshot: &AuditSnapshot, e: &EnergyConstants) -> CostReport {
    assert_eq!(snapshot.multiplies, 0, "multiplies recorded on the MP datapath");
    let add_sub_pj = (snapshot.adds + snapshot.subs) as f64 * e.c_add;
    let compare_pj = snapshot.compares as f64 * e.c_cmp;
    let multiply_pj = snapshot.multiplies as f64 * e.c_mult;
    CostReport {
        counters: *snapshot,
        energy: *e,
        add_sub_pj,
        compare_pj,
        multiply_pj,
        total_pj: add_sub_pj + compare_pj + multiply_pj,
        measured_sparsity: estimate_sparsity(snapshot),
    }
}
