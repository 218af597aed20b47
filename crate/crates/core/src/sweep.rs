//! End-to-end experiment pipeline: data, training, calibration of every
//! predictor over a range of outlier counts, and test-set evaluation.

use serde::{Deserialize, Serialize};

use crate::baselines::{cp_fit_classification, cp_fit_regression, IpmModel, Predictor};
use crate::calibrate::{CostConfig, FitContext, ZcpModel};
use crate::data::{generate, split_counts, Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::lp::MilpOptions;
use crate::mlp::{train, Mlp, TrainConfig};
use crate::outliers::{detect, detect_greedy_path, model_from_result, OutlierMethod, OutlierResult};
use crate::placement::{place, Placement, Strategy};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Zcp,
    Ipm,
    Cp,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zcp" => Ok(Self::Zcp),
            "ipm" => Ok(Self::Ipm),
            "cp" => Ok(Self::Cp),
            other => Err(Error::InvalidArgument(format!("unknown predictor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Synthetic dataset name (`sd-r1`, `sd-r2`, `sd-c1`, `sd-c2`).
    pub name: String,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Generates the named dataset and splits it into train/calibration/test.
/// Classification sets are generated with equal class counts, rounded up;
/// the extra rows go to training.
pub fn prepare_data(cfg: &DataConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let total = cfg.n_train + cfg.n_cal + cfg.n_test;
    let probe = generate(&cfg.name, 1, cfg.seed)?;
    let n = match probe.task {
        Task::Regression => total,
        Task::Classification => total.div_ceil(probe.n_y()),
    };
    let d = generate(&cfg.name, n, cfg.seed)?;
    let (train, cal, test) = split_counts(&d, cfg.n_cal, cfg.n_test, cfg.seed.wrapping_add(1))?;
    Ok((train, cal, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub strategy: Strategy,
    pub p_p: f64,
    pub placement_seed: u64,
    pub cost: CostConfig,
    pub method: OutlierMethod,
    pub n_outs: Vec<usize>,
    pub predictors: Vec<PredictorKind>,
    pub bootstrap_seed: u64,
}

impl SweepConfig {
    /// ORand with `p_p = 0.1`, greedy outlier removal, `n_out = 0..=5`, all
    /// three predictors; rotated-interval cost (`n_r = 10`) for regression and
    /// interval cost for classification.
    pub fn default_for(task: Task) -> Self {
        Self {
            strategy: Strategy::ORand,
            p_p: 0.1,
            placement_seed: 0,
            cost: match task {
                Task::Regression => CostConfig::rotated_interval(10, 0),
                Task::Classification => CostConfig::interval(),
            },
            method: OutlierMethod::Greedy,
            n_outs: (0..=5).collect(),
            predictors: vec![PredictorKind::Zcp, PredictorKind::Ipm, PredictorKind::Cp],
            bootstrap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reports: Vec<EvalReport>,
    /// Outlier results of the ZCP calibration, one per entry of `n_outs`.
    pub zcp_outliers: Vec<OutlierResult>,
    pub ipm_outliers: Vec<OutlierResult>,
}

impl SweepResult {
    pub fn report(&self, predictor: &str, n_out: usize) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.predictor == predictor && r.n_out == n_out)
    }
}

/// Calibrated ZCPs on `cal` for every `n_out`, sharing one search where the
/// method allows it.
pub fn zcp_models(
    net: &Mlp,
    placement: &Placement,
    cal: &Dataset,
    cost: &CostConfig,
    method: OutlierMethod,
    n_outs: &[usize],
) -> Result<Vec<(ZcpModel, OutlierResult)>> {
    let ctx = FitContext::new(net, placement, cal, cost)?;
    let results: Vec<OutlierResult> = match method {
        OutlierMethod::Greedy => {
            let path = detect_greedy_path(&ctx, n_outs.iter().copied().max().unwrap_or(0))?;
            n_outs.iter().map(|&n| path[n].clone()).collect()
        }
        _ => n_outs
            .iter()
            .map(|&n| detect(&ctx, n, method, &MilpOptions::default()))
            .collect::<Result<_>>()?,
    };
    Ok(results
        .into_iter()
        .map(|r| (model_from_result(net, placement, &ctx, cost, &r), r))
        .collect())
}

/// Runs every requested predictor over `n_outs` and evaluates on `test`.
pub fn run_sweep(net: &Mlp, cal: &Dataset, test: &Dataset, cfg: &SweepConfig) -> Result<SweepResult> {
    let wants = |k| cfg.predictors.contains(&k);
    let calib_inputs: Vec<Vector> = (0..cal.len()).map(|m| cal.x(m)).collect();
    let placement = place(cfg.strategy, net, cfg.p_p, cfg.placement_seed, &calib_inputs)?;
    let mut reports = Vec::new();
    let mut zcp_outliers = Vec::new();
    let mut ipm_outliers = Vec::new();

    let zcps = if wants(PredictorKind::Zcp) || (wants(PredictorKind::Ipm) && placement.has_identity_template()) {
        zcp_models(net, &placement, cal, &cfg.cost, cfg.method, &cfg.n_outs)?
    } else {
        Vec::new()
    };
    if wants(PredictorKind::Zcp) {
        for (model, res) in &zcps {
            let p = Predictor::Zcp(model.clone());
            reports.push(evaluate(&p, test, res.removed.len(), cfg.bootstrap_seed)?);
            zcp_outliers.push(res.clone());
        }
    }
    if wants(PredictorKind::Ipm) {
        // The interval predictor is the box hull of the same fit; with a
        // non-identity template it is refitted on the identity template.
        let ipms = if placement.has_identity_template() {
            zcps
        } else {
            let identity = placement.with_template(Matrix::identity(placement.n_u(), placement.n_u()))?;
            zcp_models(net, &identity, cal, &cfg.cost, cfg.method, &cfg.n_outs)?
        };
        for (model, res) in ipms {
            let n_out = res.removed.len();
            let p = Predictor::Ipm(IpmModel::from_zcp(model)?);
            reports.push(evaluate(&p, test, n_out, cfg.bootstrap_seed)?);
            ipm_outliers.push(res);
        }
    }
    if wants(PredictorKind::Cp) {
        for &n_out in &cfg.n_outs {
            let cp = match cal.task {
                Task::Regression => cp_fit_regression(net, cal, n_out)?,
                Task::Classification => cp_fit_classification(net, cal, n_out)?,
            };
            reports.push(evaluate(&Predictor::Cp(cp), test, n_out, cfg.bootstrap_seed)?);
        }
    }
    Ok(SweepResult {
        reports,
        zcp_outliers,
        ipm_outliers,
    })
}

/// Data generation, training and the full sweep in one call.
pub fn run_experiment(data: &DataConfig, hidden: &[usize], train_cfg: &TrainConfig, cfg: &SweepConfig) -> Result<(Mlp, SweepResult)> {
    let (train_set, cal, test) = prepare_data(data)?;
    let net = train(&train_set, hidden, train_cfg)?;
    let result = run_sweep(&net, &cal, &test, cfg)?;
    Ok((net, result))
}
