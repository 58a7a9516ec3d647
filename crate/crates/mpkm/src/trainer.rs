//! Online full-batch gradient training: absolute cost, indicator-based
//! gradients with shift-realized reciprocals, shift-only parameter updates,
//! and gamma annealing.

use rayon::prelude::*;

use crate::kernel::{forward_from_kernel, GammaParams, InferenceTrace, KernelVector, ModelParams};
use crate::mp::MpConfig;
use crate::scalar::Scalar;

/// One-hot binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPair {
    pub y_plus: u8,
    pub y_minus: u8,
}

impl LabelPair {
    pub fn positive() -> LabelPair {
        LabelPair { y_plus: 1, y_minus: 0 }
    }

    pub fn negative() -> LabelPair {
        LabelPair { y_plus: 0, y_minus: 1 }
    }

    pub fn from_bool(positive: bool) -> LabelPair {
        if positive {
            LabelPair::positive()
        } else {
            LabelPair::negative()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Learning rate eta = 2^-eta_shift, applied as an arithmetic shift.
    pub eta_shift: u32,
    /// Initial gamma_1 (the annealed layer hyper-parameter).
    pub gamma1_init: f64,
    /// Kernel MP hyper-parameter gamma_2 (held fixed).
    pub gamma2: f64,
    /// Annealing step.
    pub epsilon: f64,
    /// Cost-improvement threshold that triggers annealing.
    pub delta: f64,
    /// Number of full-batch iterations.
    pub iterations: u32,
    /// Floor for gamma_1.
    pub gamma_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_shift: 6,
            gamma1_init: 1.0,
            gamma2: 0.5,
            epsilon: 1.0 / 16.0,
            delta: 1.0 / 16.0,
            iterations: 100,
            gamma_min: 0.5,
        }
    }
}

/// Full-batch gradient sums, zeroed at the start of each iteration.
///
/// Per-sample gradients are computed in the datapath scalar type, but the
/// batch sum lives in a wide accumulator (adds only, no multiplies) so that
/// summing hundreds of samples cannot saturate the narrow word and collapse
/// every step to the same magnitude. The scaled step is quantized back to
/// the datapath once, at update time.
#[derive(Debug, Clone)]
pub struct GradientAccumulator {
    pub dw_plus: Vec<f64>,
    pub dw_minus: Vec<f64>,
    pub db_plus: f64,
    pub db_minus: f64,
}

impl GradientAccumulator {
    pub fn zeros(count: usize) -> GradientAccumulator {
        GradientAccumulator {
            dw_plus: vec![0.0; count],
            dw_minus: vec![0.0; count],
            db_plus: 0.0,
            db_minus: 0.0,
        }
    }

    pub fn merge(&mut self, sample: &SampleGradients) {
        for (acc, &g) in self.dw_plus.iter_mut().zip(&sample.dw_plus) {
            *acc += g;
        }
        for (acc, &g) in self.dw_minus.iter_mut().zip(&sample.dw_minus) {
            *acc += g;
        }
        self.db_plus += sample.db_plus;
        self.db_minus += sample.db_minus;
    }
}

/// Per-sample gradient of the absolute cost w.r.t. every parameter.
///
/// Gradients are bookkeeping, not datapath: they are evaluated in wide
/// precision from the (already quantized) forward trace, because on narrow
/// words the q/r scale factors collapse to the same quantum and the
/// discriminative part of the gradient cancels exactly. Only the scaled
/// update step is quantized back into the parameter format.
#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub dw_plus: Vec<f64>,
    pub dw_minus: Vec<f64>,
    pub db_plus: f64,
    pub db_minus: f64,
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn add_signed(acc: f64, sign: i8, v: f64) -> f64 {
    acc + sign as f64 * v
}

/// Absolute cost: sum_n |y+ - p+| + |y- - p-|. Accumulated in reals; the
/// per-sample terms themselves come from the datapath.
pub fn cost<S: Scalar>(traces: &[InferenceTrace<S>], labels: &[LabelPair]) -> f64 {
    assert_eq!(traces.len(), labels.len());
    traces
        .iter()
        .zip(labels)
        .map(|(t, y)| {
            (y.y_plus as f64 - t.p_plus.to_f64()).abs()
                + (y.y_minus as f64 - t.p_minus.to_f64()).abs()
        })
        .sum()
}

/// Gradient terms for one sample from the forward trace's indicator bits.
///
/// q = (1 - 1/|S|)/|S_p| and r = (1 - 1/|S|)/|S_n|, where |S|, |S_p|, |S_n|
/// and the indicator bits come from the forward trace. |S| = 1
/// short-circuits to all-zero gradients (the normalization MP is flat there).
pub fn sample_gradients<S: Scalar>(trace: &InferenceTrace<S>, label: &LabelPair) -> SampleGradients {
    let count = (trace.mask_zp.len() - 1) / 2;
    let mut out = SampleGradients {
        dw_plus: vec![0.0; count],
        dw_minus: vec![0.0; count],
        db_plus: 0.0,
        db_minus: 0.0,
    };
    if trace.s_count < 2 {
        return out;
    }

    let sgn_p = sgn(trace.p_plus.to_f64() - label.y_plus as f64);
    let sgn_n = sgn(trace.p_minus.to_f64() - label.y_minus as f64);
    if sgn_p == 0 && sgn_n == 0 {
        return out;
    }

    let damp = 1.0 - 1.0 / trace.s_count as f64;
    let q = damp / trace.sp_count as f64;
    let r = damp / trace.sn_count as f64;
    let gate = |cond: bool, v: f64| if cond { v } else { 0.0 };

    for i in 0..count {
        let iwpkp = trace.mask_zp[i];
        let iwmkm = trace.mask_zp[count + i];
        let iwpkm = trace.mask_zn[i];
        let iwmkp = trace.mask_zn[count + i];

        // dp+/dw+ and dp-/dw+
        let dpp = gate(trace.i_zp && iwpkp, q) - gate(iwpkm, r);
        let dpn = gate(trace.i_zn && iwpkm, r) - gate(iwpkp, q);
        out.dw_plus[i] = add_signed(add_signed(out.dw_plus[i], sgn_p, dpp), sgn_n, dpn);

        // dp+/dw- and dp-/dw-
        let dpp = gate(trace.i_zp && iwmkm, q) - gate(iwmkp, r);
        let dpn = gate(trace.i_zn && iwmkp, r) - gate(iwmkm, q);
        out.dw_minus[i] = add_signed(add_signed(out.dw_minus[i], sgn_p, dpp), sgn_n, dpn);
    }

    // Biases feed only one of the two layer MPs, so the bracket keeps the
    // direct membership term and the cross term through the normalization MP.
    let ib_p = trace.mask_zp[2 * count];
    let ib_n = trace.mask_zn[2 * count];
    let dpp = gate(trace.i_zp && ib_p, q);
    let dpn = -gate(ib_p, q);
    out.db_plus = add_signed(add_signed(out.db_plus, sgn_p, dpp), sgn_n, dpn);
    let dpn = gate(trace.i_zn && ib_n, r);
    let dpp = -gate(ib_n, r);
    out.db_minus = add_signed(add_signed(out.db_minus, sgn_n, dpn), sgn_p, dpp);

    out
}

/// Apply one full-batch update: param -= grad >> eta_shift, saturating.
pub fn update_params<S: Scalar>(
    params: &ModelParams<S>,
    acc: &GradientAccumulator,
    cfg: &TrainConfig,
) -> ModelParams<S> {
    let scale = (cfg.eta_shift as f64).exp2();
    let step = |p: S, g: f64| p.sub_sat(p.from_f64_like(g / scale));
    ModelParams {
        w_plus: params
            .w_plus
            .iter()
            .zip(&acc.dw_plus)
            .map(|(&p, &g)| step(p, g))
            .collect(),
        w_minus: params
            .w_minus
            .iter()
            .zip(&acc.dw_minus)
            .map(|(&p, &g)| step(p, g))
            .collect(),
        b_plus: step(params.b_plus, acc.db_plus),
        b_minus: step(params.b_minus, acc.db_minus),
        gamma1: params.gamma1,
    }
}

/// Gamma annealing: shrink gamma_1 by epsilon when the cost improved by more
/// than delta, never below gamma_min.
pub fn anneal_gamma<S: Scalar>(e_prev: f64, e_curr: f64, gamma1: S, cfg: &TrainConfig) -> S {
    if e_prev - e_curr > cfg.delta {
        let next = gamma1.sub_sat(gamma1.from_f64_like(cfg.epsilon));
        if next.to_f64() < cfg.gamma_min {
            gamma1.from_f64_like(cfg.gamma_min)
        } else {
            next
        }
    } else {
        gamma1
    }
}

/// One row of the training log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainLogRow {
    pub tau: u32,
    pub cost: f64,
    pub gamma1: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {0}: labels must be one-hot binary")]
    NonBinaryLabel(usize),
}

/// Full-batch training loop over precomputed kernel vectors. Kernels depend
/// only on the inputs and stored vectors, so they are computed once by the
/// caller. Per-sample passes run in parallel; the fixed-point gradient
/// accumulation order is pinned to sample order for reproducibility.
pub fn fit<S: Scalar>(
    kernels: &[KernelVector<S>],
    labels: &[LabelPair],
    cfg: &TrainConfig,
    mp_cfg: &MpConfig,
    proto: S,
) -> Result<(ModelParams<S>, Vec<TrainLogRow>), TrainError> {
    if kernels.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, label) in labels.iter().enumerate() {
        if label.y_plus + label.y_minus != 1 {
            return Err(TrainError::NonBinaryLabel(i));
        }
    }
    let count = kernels[0].k_minus.len();
    let gammas = GammaParams { gamma2: proto.from_f64_like(cfg.gamma2), gamma_n: proto.one_like() };
    let mut params = ModelParams::zeros(count, proto.from_f64_like(cfg.gamma1_init), proto);
    let mut log = Vec::with_capacity(cfg.iterations as usize);
    let mut e_prev: Option<f64> = None;
    // Best-iterate selection: the full-batch sign updates can wander out of a
    // good region late in training, so keep the snapshot with the highest
    // training accuracy (ties broken by lower cost) instead of the last one.
    let mut best: Option<(f64, f64, ModelParams<S>)> = None;

    for tau in 1..=cfg.iterations {
        let per_sample: Vec<(InferenceTrace<S>, SampleGradients)> = kernels
            .par_iter()
            .zip(labels.par_iter())
            .map(|(kernel, label)| {
                let trace = forward_from_kernel(kernel, &params, &gammas, mp_cfg);
                let grads = sample_gradients(&trace, label);
                (trace, grads)
            })
            .collect();

        let traces: Vec<InferenceTrace<S>> = per_sample.iter().map(|(t, _)| t.clone()).collect();
        let e_tau = cost(&traces, labels);
        let hits = traces
            .iter()
            .zip(labels)
            .filter(|(t, y)| t.p.is_strictly_positive() == (y.y_plus == 1))
            .count();

        let acc_tau = hits as f64 / labels.len() as f64;
        let improved = match &best {
            None => true,
            Some((best_acc, best_cost, _)) => {
                acc_tau > *best_acc || (acc_tau == *best_acc && e_tau < *best_cost)
            }
        };
        if improved {
            best = Some((acc_tau, e_tau, params.clone()));
        }

        let mut acc = GradientAccumulator::zeros(count);
        for (_, grads) in &per_sample {
            acc.merge(grads);
        }
        params = update_params(&params, &acc, cfg);

        if let Some(prev) = e_prev {
            params.gamma1 = anneal_gamma(prev, e_tau, params.gamma1, cfg);
        }
        e_prev = Some(e_tau);

        log.push(TrainLogRow {
            tau,
            cost: e_tau,
            gamma1: params.gamma1.to_f64(),
            train_accuracy: hits as f64 / labels.len() as f64,
        });
    }

    if let Some((_, _, best_params)) = best {
        params = best_params;
    }
    Ok((params, log))
}
