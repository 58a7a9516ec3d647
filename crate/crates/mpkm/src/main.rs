use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpkm::algebra::{inner_product_exact, inner_product_lse, inner_product_mp};
use mpkm::costmodel::{
    audit_report, cost_km, cost_mp, cost_mpkm, cost_mvm, estimate_sparsity, CostParams,
    EnergyConstants,
};
use mpkm::datasets::{load_csv, synth_occupancy, write_csv, Dataset, FeatureRanges, StoredPolicy};
use mpkm::eval::{cross_validate, predict_row, train_model, EvalConfig, TrainedModel};
use mpkm::fxp::{audit, FxFormat, FxWord};
use mpkm::kernel::GammaParams;
use mpkm::model::{ModelError, ModelFile};
use mpkm::mp::MpConfig;
use mpkm::scalar::Scalar;
use mpkm::trainer::TrainConfig;

#[derive(Parser)]
#[command(name = "mpkm", about = "Multiplierless margin-propagation kernel machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fixed-point model and write the model file plus a training log.
    Train(CommonOpts),
    /// k-fold cross-validation; prints a JSON accuracy report.
    Eval(CommonOpts),
    /// Classify a labeled CSV with a saved model; writes per-row predictions.
    Predict(CommonOpts),
    /// Accuracy across total bit widths 8..=16; writes a CSV.
    SweepBits(CommonOpts),
    /// Random inner-product scatter: exact vs MP vs log-sum-exp, as CSV.
    Scatter {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of random vector pairs.
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Vector dimension.
        #[arg(long, default_value_t = 64)]
        dims: usize,
        /// MP / log-sum-exp hyper-parameter for the scatter run.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Symbolic cost formulas plus a measured operation census, as JSON.
    CostReport {
        #[command(flatten)]
        common: CommonOpts,
        /// Matrix dimension M for the symbolic section.
        #[arg(long, default_value_t = 256)]
        m: u64,
    },
    /// Generate the synthetic occupancy CSV used by eval when no dataset is given.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of rows.
        #[arg(long, default_value_t = 2000)]
        n: usize,
    },
}

#[derive(Args, Debug, Default, Clone)]
struct CommonOpts {
    /// Flat key=value config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a binary label column.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Model file path (output for train, input for predict).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Total datapath bits.
    #[arg(long)]
    bits: Option<u32>,
    /// Fraction bits.
    #[arg(long)]
    frac_bits: Option<u32>,
    /// Initial gamma1.
    #[arg(long)]
    gamma1: Option<f64>,
    /// Kernel gamma2.
    #[arg(long)]
    gamma2: Option<f64>,
    /// Learning rate eta = 2^-eta_shift.
    #[arg(long)]
    eta_shift: Option<u32>,
    /// Annealing step.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Annealing cost-improvement threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Training iterations.
    #[arg(long)]
    iters: Option<u32>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Seed for every random choice in the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of stored vectors.
    #[arg(long)]
    stored_count: Option<usize>,
    /// Stored-vector selection: head | random.
    #[arg(long)]
    stored_policy: Option<String>,
    /// Output path (CSV/JSON per command).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the float reference datapath instead of fixed point.
    #[arg(long)]
    float: bool,
    /// Label column name in the dataset CSV.
    #[arg(long)]
    label_column: Option<String>,
}

/// Fully resolved run configuration: flags > config file > defaults.
#[derive(Debug, Clone)]
struct RunConfig {
    dataset: Option<PathBuf>,
    model: Option<PathBuf>,
    fmt: FxFormat,
    float: bool,
    eval: EvalConfig,
    out: Option<PathBuf>,
    label_column: String,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] mpkm::datasets::DatasetError),
    #[error(transparent)]
    Eval(#[from] mpkm::eval::EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn load_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn resolve(opts: &CommonOpts) -> Result<RunConfig, CliError> {
    let file = match &opts.config {
        Some(path) => load_config_file(path)?,
        None => HashMap::new(),
    };
    fn pick<T: std::str::FromStr>(
        flag: Option<T>,
        file: &HashMap<String, String>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config: bad value for {key}: {raw:?}"))),
            None => Ok(None),
        }
    }

    let defaults = TrainConfig::default();
    let bits = pick(opts.bits, &file, "bits")?.unwrap_or(FxFormat::DATAPATH.total_bits);
    let frac_bits = pick(opts.frac_bits, &file, "frac_bits")?
        .unwrap_or_else(|| bits.saturating_sub(4).max(1));
    let fmt = FxFormat::new(bits, frac_bits)
        .map_err(|e| CliError::Usage(format!("bad fixed-point format: {e}")))?;
    let float = opts.float || file.get("float").map(|v| v == "true").unwrap_or(false);

    let train = TrainConfig {
        eta_shift: pick(opts.eta_shift, &file, "eta_shift")?.unwrap_or(defaults.eta_shift),
        gamma1_init: pick(opts.gamma1, &file, "gamma1")?.unwrap_or(defaults.gamma1_init),
        gamma2: pick(opts.gamma2, &file, "gamma2")?.unwrap_or(defaults.gamma2),
        epsilon: pick(opts.epsilon, &file, "epsilon")?.unwrap_or(defaults.epsilon),
        delta: pick(opts.delta, &file, "delta")?.unwrap_or(defaults.delta),
        iterations: pick(opts.iters, &file, "iters")?.unwrap_or(defaults.iterations),
        gamma_min: defaults.gamma_min,
    };
    let policy_name =
        pick(opts.stored_policy.clone(), &file, "stored_policy")?.unwrap_or_else(|| "head".into());
    let seed = pick(opts.seed, &file, "seed")?.unwrap_or(7);
    let stored_policy = match policy_name.as_str() {
        "head" => StoredPolicy::Head,
        "random" => StoredPolicy::Random { seed },
        other => {
            return Err(CliError::Usage(format!(
                "--stored-policy must be head or random, got {other:?}"
            )))
        }
    };
    let mp = if float { MpConfig::exact() } else { MpConfig::default() };
    let eval = EvalConfig {
        train,
        mp,
        stored_count: pick(opts.stored_count, &file, "stored_count")?.unwrap_or(64),
        stored_policy,
        folds: pick(opts.folds, &file, "folds")?.unwrap_or(5),
        seed,
    };
    Ok(RunConfig {
        dataset: pick(opts.dataset.clone(), &file, "dataset")?,
        model: pick(opts.model.clone(), &file, "model")?,
        fmt,
        float,
        eval,
        out: pick(opts.out.clone(), &file, "out")?,
        label_column: pick(opts.label_column.clone(), &file, "label_column")?
            .unwrap_or_else(|| "Occupancy".into()),
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.dataset {
        Some(path) => Ok(load_csv(path, &cfg.label_column)?),
        None => Err(CliError::Usage("--dataset is required".into())),
    }
}

fn ranges_path(model_path: &Path) -> PathBuf {
    PathBuf::from(format!("{}.ranges", model_path.display()))
}

fn write_json(value: &impl serde::Serialize, out: &Option<PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn assert_multiplierless() {
    let snapshot = audit().snapshot();
    assert_eq!(snapshot.multiplies, 0, "multiplies recorded on the MP datapath");
}

fn cmd_train(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    if cfg.float {
        return Err(CliError::Usage(
            "train writes fixed-point model files; drop --float".into(),
        ));
    }
    let model_path = cfg
        .model
        .clone()
        .ok_or_else(|| CliError::Usage("--model output path is required".into()))?;
    let dataset = load_dataset(&cfg)?;
    audit().reset();
    let proto = FxWord::zero(cfg.fmt);
    let trained = train_model(&dataset, &cfg.eval, proto)?;

    let model = ModelFile {
        fmt: cfg.fmt,
        gamma2: trained.gammas.gamma2,
        params: trained.params.clone(),
        stored: trained.stored.clone(),
    };
    model.save(&model_path)?;
    trained.ranges.save(&ranges_path(&model_path))?;

    if let Some(out) = &cfg.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["tau", "cost", "gamma1", "train_accuracy"])?;
        for row in &trained.log {
            w.write_record([
                row.tau.to_string(),
                format!("{:.6}", row.cost),
                format!("{:.6}", row.gamma1),
                format!("{:.6}", row.train_accuracy),
            ])?;
        }
        w.flush()?;
    }
    assert_multiplierless();
    if let Some(last) = trained.log.last() {
        eprintln!(
            "trained {} iterations; final cost {:.4}, train accuracy {:.4}",
            last.tau, last.cost, last.train_accuracy
        );
    }
    Ok(())
}

fn cmd_eval(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    let dataset = load_dataset(&cfg)?;
    if cfg.eval.folds == 1 {
        eprintln!("warning: --folds 1 trains and tests on the same split");
    }
    audit().reset();
    let report = if cfg.float {
        cross_validate(&dataset, &cfg.eval, 0.0f64)?
    } else {
        cross_validate(&dataset, &cfg.eval, FxWord::zero(cfg.fmt))?
    };
    assert_multiplierless();
    write_json(&report, &cfg.out)
}

fn cmd_predict(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    let model_path = cfg
        .model
        .clone()
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let dataset = load_dataset(&cfg)?;
    let model = ModelFile::load(&model_path)?;
    if model.dims() != dataset.dims() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dims(),
            actual: dataset.dims(),
        }
        .into());
    }
    let ranges = FeatureRanges::load(&ranges_path(&model_path))?;
    let trained = TrainedModel {
        gammas: GammaParams { gamma2: model.gamma2, gamma_n: model.gamma2.one_like() },
        params: model.params,
        stored: model.stored,
        ranges,
        log: vec![],
    };
    let mp = MpConfig::default();
    let proto = FxWord::zero(model.fmt);

    let mut rows = Vec::with_capacity(dataset.len());
    let mut hits = 0usize;
    for (i, feats) in dataset.features.iter().enumerate() {
        let positive = predict_row(&trained, feats, &mp, proto)?;
        let label = dataset.labels[i].y_plus == 1;
        hits += usize::from(positive == label);
        rows.push((i, positive, label));
    }
    let accuracy = hits as f64 / dataset.len() as f64;

    match &cfg.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["row", "prediction", "label"])?;
            for (i, pred, label) in &rows {
                w.write_record([
                    i.to_string(),
                    u8::from(*pred).to_string(),
                    u8::from(*label).to_string(),
                ])?;
            }
            w.flush()?;
        }
        None => {
            for (i, pred, label) in &rows {
                println!("{i},{},{}", u8::from(*pred), u8::from(*label));
            }
        }
    }
    eprintln!("accuracy {accuracy:.4} over {} rows", dataset.len());
    Ok(())
}

fn cmd_sweep_bits(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    let dataset = load_dataset(&cfg)?;
    let mut lines = vec!["total_bits,train_accuracy,test_accuracy".to_string()];
    for bits in 8..=16u32 {
        let fmt = FxFormat::new(bits, bits - 4)
            .map_err(|e| CliError::Usage(format!("bad sweep format: {e}")))?;
        audit().reset();
        let report = cross_validate(&dataset, &cfg.eval, FxWord::zero(fmt))?;
        assert_multiplierless();
        lines.push(format!(
            "{bits},{:.6},{:.6}",
            report.mean_train_accuracy, report.mean_accuracy
        ));
        eprintln!("{bits} bits: test accuracy {:.4}", report.mean_accuracy);
    }
    let text = lines.join("\n") + "\n";
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_scatter(
    opts: &CommonOpts,
    pairs: usize,
    dims: usize,
    gamma: f64,
) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
    let mp = MpConfig::default();
    let mut lines = vec!["exact,mp,lse".to_string()];
    for _ in 0..pairs {
        let w: Vec<f64> = (0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let exact = inner_product_exact(&w, &x).expect("same dims");
        let approx = inner_product_mp(&w, &x, gamma, &mp).expect("same dims");
        let lse = inner_product_lse(&w, &x, gamma).expect("same dims");
        lines.push(format!("{exact:.9},{approx:.9},{lse:.9}"));
    }
    let text = lines.join("\n") + "\n";
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_cost_report(opts: &CommonOpts, m: u64) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    // Measured section: census of a real fixed-point training run. Use the
    // provided dataset when given, otherwise a small synthetic workload.
    let dataset = match &cfg.dataset {
        Some(path) => load_csv(path, &cfg.label_column)?,
        None => synth_occupancy(128, cfg.eval.seed),
    };
    audit().reset();
    let workload = EvalConfig {
        train: TrainConfig { iterations: 5, ..cfg.eval.train.clone() },
        stored_count: cfg.eval.stored_count.min(32),
        ..cfg.eval.clone()
    };
    train_model(&dataset, &workload, FxWord::zero(cfg.fmt))?;
    let snapshot = audit().snapshot();
    let measured = audit_report(&snapshot, &EnergyConstants::default());

    let params = CostParams {
        m,
        r: cfg.eval.mp.rounds as u64,
        f: estimate_sparsity(&snapshot).unwrap_or(1.0),
    };
    let e = EnergyConstants::default();
    let report = serde_json::json!({
        "symbolic": {
            "params": params,
            "cost_mvm_pj": cost_mvm(&params, &e),
            "cost_mp_pj": cost_mp(&params, &e),
            "cost_km_pj": cost_km(&params, &e),
            "cost_mpkm_pj": cost_mpkm(&params, &e),
        },
        "measured": measured,
    });
    write_json(&report, &cfg.out)
}

fn cmd_synth(opts: &CommonOpts, n: usize) -> Result<(), CliError> {
    let cfg = resolve(opts)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let dataset = synth_occupancy(n, cfg.eval.seed);
    write_csv(&dataset, &out)?;
    eprintln!("wrote {} rows to {}", dataset.len(), out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(opts) => cmd_train(opts),
        Command::Eval(opts) => cmd_eval(opts),
        Command::Predict(opts) => cmd_predict(opts),
        Command::SweepBits(opts) => cmd_sweep_bits(opts),
        Command::Scatter { common, pairs, dims, gamma } => {
            cmd_scatter(common, *pairs, *dims, *gamma)
        }
        Command::CostReport { common, m } => cmd_cost_report(common, *m),
        Command::Synth { common, n } => cmd_synth(common, *n),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
