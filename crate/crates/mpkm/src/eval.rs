//! End-to-end pipeline shared by the CLI and the acceptance suite:
//! per-fold normalization, differential encoding, stored-vector selection,
//! kernel precomputation, training, and test-set scoring.

use rayon::prelude::*;

use crate::algebra::encode_differential;
use crate::datasets::{kfold, select_stored, Dataset, DatasetError, FeatureRanges, StoredPolicy};
use crate::kernel::{
    compute_kernel_vector, forward_from_kernel, predict, GammaParams, KernelVector, ModelParams,
    StoredVectors,
};
use crate::mp::MpConfig;
use crate::scalar::Scalar;
use crate::trainer::{fit, TrainConfig, TrainError, TrainLogRow};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub mp: MpConfig,
    pub stored_count: usize,
    pub stored_policy: StoredPolicy,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig::default(),
            mp: MpConfig::default(),
            stored_count: 64,
            stored_policy: StoredPolicy::Head,
            folds: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("algebra error: {0}")]
    Algebra(#[from] crate::algebra::AlgebraError),
}

/// A trained model together with the normalization it expects.
#[derive(Debug, Clone)]
pub struct TrainedModel<S> {
    pub params: ModelParams<S>,
    pub stored: StoredVectors<S>,
    pub gammas: GammaParams<S>,
    pub ranges: FeatureRanges,
    pub log: Vec<TrainLogRow>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub final_cost: f64,
    pub final_gamma1: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    pub mean_train_accuracy: f64,
}

/// Normalize, encode, pick stored vectors, precompute kernels, and train.
pub fn train_model<S: Scalar>(
    train_set: &Dataset,
    cfg: &EvalConfig,
    proto: S,
) -> Result<TrainedModel<S>, EvalError> {
    let (norm, ranges) = crate::datasets::normalize(train_set);
    let stored_count = cfg.stored_count.min(norm.len());
    let stored = select_stored(&norm, stored_count, cfg.stored_policy, proto)?;
    let gamma2 = proto.from_f64_like(cfg.train.gamma2);
    let gammas = GammaParams { gamma2, gamma_n: proto.one_like() };

    let kernels: Vec<KernelVector<S>> = norm
        .features
        .par_iter()
        .map(|row| {
            let x = encode_differential(row, proto).expect("normalized input");
            compute_kernel_vector(&x, &stored, gamma2, &cfg.mp).expect("dims match")
        })
        .collect();

    let (params, log) = fit(&kernels, &norm.labels, &cfg.train, &cfg.mp, proto)?;
    Ok(TrainedModel { params, stored, gammas, ranges, log })
}

/// Fraction of rows whose prediction matches the label. Raw (unnormalized)
/// features go in; the model applies its own normalization.
pub fn score<S: Scalar>(
    model: &TrainedModel<S>,
    dataset: &Dataset,
    mp_cfg: &MpConfig,
    proto: S,
) -> Result<f64, EvalError> {
    let hits: usize = dataset
        .features
        .par_iter()
        .zip(dataset.labels.par_iter())
        .map(|(row, label)| {
            let pred = predict_row(model, row, mp_cfg, proto).expect("dims match");
            usize::from(pred == (label.y_plus == 1))
        })
        .sum();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Predict one raw feature row. Returns true for the positive class.
pub fn predict_row<S: Scalar>(
    model: &TrainedModel<S>,
    row: &[f64],
    mp_cfg: &MpConfig,
    proto: S,
) -> Result<bool, EvalError> {
    let x = encode_differential(&model.ranges.apply_row(row), proto)?;
    let kernel = compute_kernel_vector(&x, &model.stored, model.gammas.gamma2, mp_cfg)?;
    let trace = forward_from_kernel(&kernel, &model.params, &model.gammas, mp_cfg);
    Ok(predict(&trace).positive)
}

/// Seeded k-fold cross-validation over a raw dataset.
pub fn cross_validate<S: Scalar>(
    dataset: &Dataset,
    cfg: &EvalConfig,
    proto: S,
) -> Result<EvalReport, EvalError> {
    let spec = kfold(dataset.len(), cfg.folds, cfg.seed);
    let mut folds = Vec::with_capacity(spec.folds.len());
    for (i, fold) in spec.folds.iter().enumerate() {
        let train_set = dataset.subset(&fold.train);
        let test_set = dataset.subset(&fold.test);
        let model = train_model(&train_set, cfg, proto)?;
        let accuracy = score(&model, &test_set, &cfg.mp, proto)?;
        // Report the iterate fit() actually returned: the one with the best
        // training accuracy (ties broken by lower cost), not the last row.
        let (final_cost, final_gamma1, train_accuracy) = model
            .log
            .iter()
            .max_by(|a, b| {
                (a.train_accuracy, -a.cost)
                    .partial_cmp(&(b.train_accuracy, -b.cost))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map_or((f64::NAN, f64::NAN, f64::NAN), |r| (r.cost, r.gamma1, r.train_accuracy));
        folds.push(FoldReport {
            fold: i,
            train_size: fold.train.len(),
            test_size: fold.test.len(),
            accuracy,
            train_accuracy,
            final_cost,
            final_gamma1,
        });
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    let mean_train_accuracy =
        folds.iter().map(|f| f.train_accuracy).sum::<f64>() / folds.len() as f64;
    Ok(EvalReport { folds, mean_accuracy, mean_train_accuracy })
}
