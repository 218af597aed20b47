//! Comparison predictors: split conformal prediction and the interval
//! predictor model, plus the tagged envelope shared by all predictors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CostConfig, ZcpModel};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::{classes_of_zonotope, CLASS_TOL};
use crate::lp::MilpOptions;
use crate::mlp::{softmax, Mlp};
use crate::outliers::{fit_zcp, OutlierMethod, OutlierResult};
use crate::placement::Placement;
use crate::zonotope::Zonotope;
use crate::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    pub net: Mlp,
    pub task: Task,
    /// One quantile per output (regression) or a single one (classification).
    pub quantiles: Vec<f64>,
    pub n_out: usize,
}

/// The `(n − n_out)`-th smallest score.
fn order_statistic(scores: &[f64], n_out: usize) -> Result<f64> {
    if n_out >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "n_out = {n_out} leaves no calibration scores out of {}",
            scores.len()
        )));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[s.len() - n_out - 1])
}

/// The `k`-th smallest score with `k = ⌈(n+1)(1−ε)⌉`.
pub fn cp_quantile(scores: &[f64], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("ε must lie in (0,1), got {epsilon}")));
    }
    let n = scores.len();
    // The small offset keeps exact products such as 10·0.9 from rounding up.
    let k = ((n as f64 + 1.0) * (1.0 - epsilon) - 1e-9).ceil().max(1.0) as usize;
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "quantile level {k}/{n} exceeds the calibration set; use more points or a larger ε"
        )));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[k - 1])
}

/// Per output `j`, `q_j` is the `(n_m − n_out)`-th smallest `|f_j(x) − y_j|`.
pub fn cp_fit_regression(net: &Mlp, data: &Dataset, n_out: usize) -> Result<CpModel> {
    if data.task != Task::Regression {
        return Err(Error::InvalidArgument("regression CP needs regression data".into()));
    }
    let residuals = (0..data.len())
        .map(|m| Ok(net.forward(&data.x(m))? - data.y(m)))
        .collect::<Result<Vec<Vector>>>()?;
    let quantiles = (0..data.n_y())
        .map(|j| order_statistic(&residuals.iter().map(|r| r[j].abs()).collect::<Vec<_>>(), n_out))
        .collect::<Result<_>>()?;
    Ok(CpModel {
        net: net.clone(),
        task: Task::Regression,
        quantiles,
        n_out,
    })
}

/// Scores `1 − softmax(f(x))_c` for the true class `c` of every
/// (multi-label expanded) point.
pub fn cp_fit_classification(net: &Mlp, data: &Dataset, n_out: usize) -> Result<CpModel> {
    if data.task != Task::Classification {
        return Err(Error::InvalidArgument("classification CP needs classification data".into()));
    }
    let mut scores = Vec::with_capacity(data.len());
    for m in 0..data.len() {
        let p = softmax(&net.forward(&data.x(m))?);
        for c in data.classes(m) {
            scores.push(1.0 - p[c]);
        }
    }
    Ok(CpModel {
        net: net.clone(),
        task: Task::Classification,
        quantiles: vec![order_statistic(&scores, n_out)?],
        n_out,
    })
}

impl CpModel {
    /// The box `f(x) ± q`.
    pub fn prediction_set(&self, x: &Vector) -> Result<Zonotope> {
        if self.task != Task::Regression {
            return Err(Error::InvalidArgument("classification CP predicts class sets".into()));
        }
        Zonotope::from_box(self.net.forward(x)?, &Vector::from_column_slice(&self.quantiles))
    }

    /// `{i : 1 − softmax(f(x))_i ≤ q}`.
    pub fn classes(&self, x: &Vector) -> Result<Vec<usize>> {
        if self.task != Task::Classification {
            return Err(Error::InvalidArgument("regression CP predicts boxes".into()));
        }
        let p = softmax(&self.net.forward(x)?);
        Ok((0..p.len()).filter(|&i| 1.0 - p[i] <= self.quantiles[0]).collect())
    }
}

/// A zono-conformal fit whose prediction sets are replaced by their box hulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmModel {
    pub zcp: ZcpModel,
}

impl IpmModel {
    pub fn from_zcp(zcp: ZcpModel) -> Result<Self> {
        if !zcp.placement.has_identity_template() {
            return Err(Error::InvalidArgument("an interval predictor needs the identity template".into()));
        }
        Ok(Self { zcp })
    }

    pub fn prediction_set(&self, x: &Vector) -> Result<Zonotope> {
        Ok(self.zcp.prediction_set(x)?.box_hull())
    }
}

pub fn ipm_fit(
    net: &Mlp,
    placement: &Placement,
    data: &Dataset,
    cost: &CostConfig,
    n_out: usize,
    method: OutlierMethod,
    milp: &MilpOptions,
) -> Result<(IpmModel, OutlierResult)> {
    if !placement.has_identity_template() {
        return Err(Error::InvalidArgument("an interval predictor needs the identity template".into()));
    }
    let (zcp, res) = fit_zcp(net, placement, data, cost, n_out, method, milp)?;
    Ok((IpmModel { zcp }, res))
}

/// Any fitted predictor, serialized with a `"kind"` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Zcp(ZcpModel),
    Ipm(IpmModel),
    Cp(CpModel),
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Zcp(_) => "zcp",
            Self::Ipm(_) => "ipm",
            Self::Cp(_) => "cp",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Self::Zcp(m) => m.task,
            Self::Ipm(m) => m.zcp.task,
            Self::Cp(m) => m.task,
        }
    }

    pub fn net(&self) -> &Mlp {
        match self {
            Self::Zcp(m) => &m.net,
            Self::Ipm(m) => &m.zcp.net,
            Self::Cp(m) => &m.net,
        }
    }

    /// The output set in `ℝ^{n_y}` (CP classification has none).
    pub fn prediction_set(&self, x: &Vector) -> Result<Zonotope> {
        match self {
            Self::Zcp(m) => m.prediction_set(x),
            Self::Ipm(m) => m.prediction_set(x),
            Self::Cp(m) => m.prediction_set(x),
        }
    }

    /// Predicted classes; CP uses its native score sets.
    pub fn classes(&self, x: &Vector) -> Result<Vec<usize>> {
        match self {
            Self::Cp(m) => m.classes(x),
            _ => classes_of_zonotope(&self.prediction_set(x)?, CLASS_TOL),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
