//! Calibration: the linear programs that pick the scaling factors `α`, and
//! the cost functions they minimize.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{check_dim, Error, Result};
use crate::eval::classes_of_zonotope;
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::mlp::Mlp;
use crate::placement::Placement;
use crate::zonotope::{Zonotope, DEFAULT_TOL};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Interval,
    RotatedInterval,
    GeneratorLengths,
    Score,
    ScoreDifference,
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(Self::Interval),
            "rotated-interval" | "rotated_interval" => Ok(Self::RotatedInterval),
            "generator-lengths" | "generator_lengths" => Ok(Self::GeneratorLengths),
            "score" => Ok(Self::Score),
            "score-difference" | "score_difference" => Ok(Self::ScoreDifference),
            other => Err(Error::InvalidArgument(format!("unknown cost {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostConfig {
    pub kind: CostKind,
    /// Number of random rotations besides the identity.
    pub n_r: usize,
    pub seed: u64,
}

impl CostConfig {
    pub fn interval() -> Self {
        Self {
            kind: CostKind::Interval,
            n_r: 0,
            seed: 0,
        }
    }

    pub fn rotated_interval(n_r: usize, seed: u64) -> Self {
        Self {
            kind: CostKind::RotatedInterval,
            n_r,
            seed,
        }
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        match (self.kind, task) {
            (CostKind::Score | CostKind::ScoreDifference, Task::Regression) => {
                Err(Error::InvalidArgument(format!(
                    "{:?} cost is defined for classification only",
                    self.kind
                )))
            }
            (CostKind::RotatedInterval, _) if self.n_r == 0 => Err(Error::InvalidArgument(
                "rotated-interval cost needs at least one rotation".into(),
            )),
            _ => Ok(()),
        }
    }

    fn rotations(&self, n_y: usize) -> Vec<Matrix> {
        match self.kind {
            CostKind::RotatedInterval => random_rotations(n_y, self.n_r, self.seed),
            _ => random_rotations(n_y, 0, self.seed),
        }
    }
}

/// `[I, R_1, …, R_{n_r}]`, each `R_i` Haar-distributed: the orthogonal factor
/// of a standard-normal matrix with the signs of `diag(R)` absorbed.
pub fn random_rotations(n_y: usize, n_r: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Matrix::identity(n_y, n_y)];
    for _ in 0..n_r {
        let g = DMatrix::from_fn(n_y, n_y, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..n_y {
            if r[(j, j)] < 0.0 {
                let mut col = q.column_mut(j);
                col *= -1.0;
            }
        }
        out.push(q);
    }
    out
}

/// Objective coefficients on `α` contributed by one data point, where
/// `basis = D̄(x) G_u` and `classes` are the true classes (classification).
pub fn cost_row(
    basis: &Matrix,
    classes: &[usize],
    cost: &CostConfig,
    rotations: &[Matrix],
) -> Result<Vector> {
    let (n_y, nu) = basis.shape();
    let abs_col_sums = |m: &Matrix| Vector::from_fn(nu, |k, _| m.column(k).iter().map(|v| v.abs()).sum());
    Ok(match cost.kind {
        CostKind::Interval => abs_col_sums(basis),
        CostKind::RotatedInterval => rotations
            .iter()
            .map(|r| abs_col_sums(&(r * basis)))
            .fold(Vector::zeros(nu), |acc, v| acc + v),
        CostKind::GeneratorLengths => Vector::from_fn(nu, |k, _| basis.column(k).norm()),
        CostKind::Score | CostKind::ScoreDifference if classes.is_empty() => {
            return Err(Error::InvalidArgument(
                "score costs need the true class of every point".into(),
            ))
        }
        CostKind::Score => Vector::from_fn(nu, |k, _| {
            (0..n_y)
                .filter(|i| !classes.contains(i))
                .map(|i| basis[(i, k)].abs())
                .sum()
        }),
        CostKind::ScoreDifference => Vector::from_fn(nu, |k, _| {
            let mut s = 0.0;
            for i in (0..n_y).filter(|i| !classes.contains(i)) {
                for &j in classes {
                    s += (basis[(i, k)] - basis[(j, k)]).abs();
                }
            }
            s
        }),
    })
}

/// Everything the calibration programs need about one calibration point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    /// `D̄(x) G_u`, `n_y × ν`.
    pub basis: Matrix,
    /// Regression: the residual `y − f(x)`. Classification: `f(x)`.
    pub target: Vector,
    /// True class (classification only).
    pub class: Option<usize>,
    pub cost: Vector,
}

/// Precomputed calibration data shared by fitting and outlier detection.
#[derive(Debug, Clone)]
pub struct FitContext {
    pub task: Task,
    pub points: Vec<PointData>,
    /// Dataset row behind each point (differs after multi-label expansion).
    pub source: Vec<usize>,
    pub lp_options: LpOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub alpha: Vector,
    pub objective: f64,
    pub lp_iterations: u64,
}

impl FitContext {
    pub fn new(net: &Mlp, placement: &Placement, data: &Dataset, cost: &CostConfig) -> Result<Self> {
        cost.validate(data.task)?;
        check_dim("dataset inputs", net.n_x(), data.n_x())?;
        check_dim("dataset outputs", net.n_y(), data.n_y())?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("calibration set is empty".into()));
        }
        let (data, source) = match data.task {
            Task::Regression => (data.clone(), (0..data.len()).collect()),
            Task::Classification => data.expand_multilabel(),
        };
        let rotations = cost.rotations(net.n_y());
        let points = (0..data.len())
            .into_par_iter()
            .map(|m| {
                let x = data.x(m);
                let f = net.forward(&x)?;
                let basis = placement.generator_basis(net, &x)?;
                let (target, class) = match data.task {
                    Task::Regression => (data.y(m) - &f, None),
                    Task::Classification => (f, Some(data.classes(m)[0])),
                };
                let classes: Vec<usize> = class.into_iter().collect();
                let cost = cost_row(&basis, &classes, cost, &rotations)?;
                Ok(PointData {
                    basis,
                    target,
                    class,
                    cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task: data.task,
            points,
            source,
            lp_options: LpOptions::default(),
        })
    }

    /// A context over hand-built points, all of the same shape.
    pub fn from_points(task: Task, points: Vec<PointData>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("calibration set is empty".into()));
        };
        let shape = first.basis.shape();
        for p in &points {
            check_dim("point basis rows", shape.0, p.basis.nrows())?;
            check_dim("point basis columns", shape.1, p.basis.ncols())?;
            check_dim("point target", shape.0, p.target.len())?;
            check_dim("point cost", shape.1, p.cost.len())?;
            if task == Task::Classification && p.class.is_none_or(|c| c >= shape.0) {
                return Err(Error::InvalidArgument("classification point without a valid class".into()));
            }
        }
        let source = (0..points.len()).collect();
        Ok(Self {
            task,
            points,
            source,
            lp_options: LpOptions::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_y(&self) -> usize {
        self.points[0].basis.nrows()
    }

    pub fn num_generators(&self) -> usize {
        self.points[0].basis.ncols()
    }

    /// `Σ_{m ∈ active} cost_m`.
    pub fn objective_coefficients(&self, active: &[usize]) -> Vector {
        active
            .iter()
            .fold(Vector::zeros(self.num_generators()), |acc, &m| acc + &self.points[m].cost)
    }

    /// Adds point `m`'s containment constraints on `β_m` (variables `beta`).
    ///
    /// With `rho = Some(j)` the right-hand side is multiplied by the binary
    /// `x_j`, so `x_j = 0` releases the point.
    pub(crate) fn add_containment(&self, lp: &mut LinearProgram, m: usize, beta: &[usize], rho: Option<usize>) {
        let p = &self.points[m];
        let nu = beta.len();
        match self.task {
            Task::Regression => {
                // D β = r
                for i in 0..p.basis.nrows() {
                    let mut row: Vec<(usize, f64)> = (0..nu)
                        .filter(|&k| p.basis[(i, k)] != 0.0)
                        .map(|k| (beta[k], p.basis[(i, k)]))
                        .collect();
                    match rho {
                        Some(j) => {
                            row.push((j, -p.target[i]));
                            lp.add_eq(row, 0.0);
                        }
                        None => lp.add_eq(row, p.target[i]),
                    }
                }
            }
            Task::Classification => {
                // T (f + D β) ≥ 0, row i: (f_c − f_i) + (D_c − D_i) β ≥ 0.
                let c = p.class.expect("classification point has a class");
                for i in (0..p.basis.nrows()).filter(|&i| i != c) {
                    let mut row: Vec<(usize, f64)> = (0..nu)
                        .map(|k| (beta[k], p.basis[(c, k)] - p.basis[(i, k)]))
                        .filter(|&(_, a)| a != 0.0)
                        .collect();
                    let margin = p.target[c] - p.target[i];
                    match rho {
                        Some(j) => {
                            row.push((j, margin));
                            lp.add_ge(row, 0.0);
                        }
                        None => lp.add_ge(row, -margin),
                    }
                }
            }
        }
    }

    /// Adds `β_m` with `−α ≤ β_m ≤ α`; returns the new variable indices.
    pub(crate) fn add_beta(lp: &mut LinearProgram, alpha: &[usize]) -> Vec<usize> {
        alpha
            .iter()
            .map(|&a| {
                let b = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                lp.add_ge(vec![(a, 1.0), (b, 1.0)], 0.0);
                lp.add_ge(vec![(a, 1.0), (b, -1.0)], 0.0);
                b
            })
            .collect()
    }

    /// The calibration program over the points in `active`.
    pub fn program(&self, active: &[usize]) -> (LinearProgram, Vec<usize>) {
        self.program_with(active, active)
    }

    /// Containment for the points in `constrained`, costs summed over
    /// `costed`.
    pub fn program_with(&self, constrained: &[usize], costed: &[usize]) -> (LinearProgram, Vec<usize>) {
        let mut lp = LinearProgram::new();
        let coeffs = self.objective_coefficients(costed);
        let alpha: Vec<usize> = coeffs.iter().map(|&c| lp.add_var(c, 0.0, f64::INFINITY)).collect();
        for &m in constrained {
            let beta = Self::add_beta(&mut lp, &alpha);
            self.add_containment(&mut lp, m, &beta, None);
        }
        (lp, alpha)
    }

    /// Solves the calibration program over `active`.
    pub fn solve(&self, active: &[usize]) -> Result<Fit> {
        self.solve_with(active, active)
    }

    /// As [`FitContext::solve`], with the objective summed over `costed`.
    pub fn solve_with(&self, active: &[usize], costed: &[usize]) -> Result<Fit> {
        if active.is_empty() {
            return Err(Error::InvalidArgument("calibration set is empty".into()));
        }
        let (lp, alpha) = self.program_with(active, costed);
        let sol = solve_lp(&lp, &self.lp_options)?;
        match sol.status {
            LpStatus::Optimal => {
                let a = Vector::from_iterator(alpha.len(), alpha.iter().map(|&j| sol.x[j].max(0.0)));
                Ok(Fit {
                    objective: self.objective_coefficients(costed).dot(&a),
                    alpha: a,
                    lp_iterations: sol.iterations,
                })
            }
            LpStatus::Infeasible => Err(Error::Infeasible {
                measurements: self.diagnose(active)?,
            }),
            LpStatus::Unbounded => Err(Error::InvalidArgument(
                "calibration program is unbounded; some cost coefficient is negative".into(),
            )),
        }
    }

    pub fn solve_all(&self) -> Result<Fit> {
        self.solve(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Re-solves with elastic slacks on the containment rows and returns the
    /// (source) indices of points whose slack is nonzero.
    fn diagnose(&self, active: &[usize]) -> Result<Vec<usize>> {
        let mut lp = LinearProgram::new();
        let nu = self.num_generators();
        let alpha: Vec<usize> = (0..nu).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
        let mut slacks: Vec<(usize, Vec<usize>)> = Vec::new();
        for &m in active {
            let beta = Self::add_beta(&mut lp, &alpha);
            let (eq0, ub0) = (lp.a_eq.len(), lp.a_ub.len());
            self.add_containment(&mut lp, m, &beta, None);
            let mut vars = Vec::new();
            for r in eq0..lp.a_eq.len() {
                let up = lp.add_var(1.0, 0.0, f64::INFINITY);
                let down = lp.add_var(1.0, 0.0, f64::INFINITY);
                lp.a_eq[r].push((up, 1.0));
                lp.a_eq[r].push((down, -1.0));
                vars.extend([up, down]);
            }
            for r in ub0..lp.a_ub.len() {
                // Stored as −(row) ≤ −rhs; the slack relaxes it.
                let s = lp.add_var(1.0, 0.0, f64::INFINITY);
                lp.a_ub[r].push((s, -1.0));
                vars.push(s);
            }
            slacks.push((self.source[m], vars));
        }
        let sol = solve_lp(&lp, &self.lp_options)?;
        if !sol.is_optimal() {
            return Ok(Vec::new());
        }
        let mut out: Vec<usize> = slacks
            .into_iter()
            .filter(|(_, vars)| vars.iter().any(|&v| sol.x[v] > 1e-9))
            .map(|(m, _)| m)
            .collect();
        out.dedup();
        Ok(out)
    }
}

/// A calibrated zono-conformal predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZcpModel {
    pub net: Mlp,
    pub placement: Placement,
    pub alpha: Vec<f64>,
    pub task: Task,
    pub cost: CostConfig,
    pub objective: f64,
    /// Calibration rows exempted from containment.
    #[serde(default)]
    pub removed: Vec<usize>,
}

impl ZcpModel {
    pub fn from_fit(net: &Mlp, placement: &Placement, task: Task, cost: &CostConfig, fit: Fit, removed: Vec<usize>) -> Self {
        Self {
            net: net.clone(),
            placement: placement.clone(),
            alpha: fit.alpha.iter().copied().collect(),
            task,
            cost: *cost,
            objective: fit.objective,
            removed,
        }
    }

    pub fn alpha_vector(&self) -> Vector {
        Vector::from_column_slice(&self.alpha)
    }

    /// `⟨f(x), D̄(x) G_u diag(α)⟩`.
    pub fn prediction_set(&self, x: &Vector) -> Result<Zonotope> {
        let f = self.net.forward(x)?;
        let mut g = self.placement.generator_basis(&self.net, x)?;
        for (k, mut col) in g.column_iter_mut().enumerate() {
            col *= self.alpha[k];
        }
        Zonotope::new(f, g)
    }

    /// Calibration rows (outside `removed`) whose output is not covered.
    pub fn audit(&self, data: &Dataset, tol: f64) -> Result<Vec<usize>> {
        let failures: Vec<Option<usize>> = (0..data.len())
            .into_par_iter()
            .map(|m| {
                if self.removed.contains(&m) {
                    return Ok(None);
                }
                let z = self.prediction_set(&data.x(m))?;
                let ok = match self.task {
                    Task::Regression => z.contains_point(&data.y(m), tol)?,
                    Task::Classification => {
                        let predicted = classes_of_zonotope(&z, tol)?;
                        data.classes(m).iter().all(|c| predicted.contains(c))
                    }
                };
                Ok((!ok).then_some(m))
            })
            .collect::<Result<_>>()?;
        Ok(failures.into_iter().flatten().collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn fit_task(net: &Mlp, placement: &Placement, data: &Dataset, cost: &CostConfig, task: Task) -> Result<ZcpModel> {
    if data.task != task {
        return Err(Error::InvalidArgument(format!(
            "{task} fit requested on {} data",
            data.task
        )));
    }
    let ctx = FitContext::new(net, placement, data, cost)?;
    let fit = ctx.solve_all()?;
    Ok(ZcpModel::from_fit(net, placement, task, cost, fit, Vec::new()))
}

/// Regression calibration: `min Σ_m cost_m·α` s.t. `α ≥ 0`, `|β_m| ≤ α`,
/// `y_m − f(x_m) = D̄(x_m) G_u β_m`.
pub fn fit_regression(net: &Mlp, placement: &Placement, data: &Dataset, cost: &CostConfig) -> Result<ZcpModel> {
    fit_task(net, placement, data, cost, Task::Regression)
}

/// Classification calibration: as regression, with the containment
/// replaced by `T_m (f(x_m) + D̄(x_m) G_u β_m) ≥ 0`, `T_m = 1 e_cᵀ − I`.
/// Multi-label rows are expanded to one point per positive class.
pub fn fit_classification(net: &Mlp, placement: &Placement, data: &Dataset, cost: &CostConfig) -> Result<ZcpModel> {
    fit_task(net, placement, data, cost, Task::Classification)
}

/// `T = 1 e_cᵀ − I` for class `c`.
pub fn class_transform(n_y: usize, c: usize) -> Matrix {
    Matrix::from_fn(n_y, n_y, |i, j| {
        let e = if j == c { 1.0 } else { 0.0 };
        let id = if i == j { 1.0 } else { 0.0 };
        e - id
    })
}

/// Checks every retained calibration point at the default tolerance.
pub fn audit_default(model: &ZcpModel, data: &Dataset) -> Result<Vec<usize>> {
    model.audit(data, DEFAULT_TOL)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::placement::place_orand;
    use crate::testutil::{affine_net, random_net};
    use proptest::prelude::*;
    use rand::Rng;

    /// `f(x) = x` in `dim` dimensions with output-only uncertainties.
    pub(crate) fn identity_setup(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> (Mlp, Placement, Dataset) {
        let dim = xs[0].len();
        let net = affine_net(Matrix::identity(dim, dim), Vector::zeros(dim));
        let placement = Placement::outputs_only(&net);
        let data = Dataset::new(
            Matrix::from_fn(xs.len(), dim, |i, j| xs[i][j]),
            Matrix::from_fn(ys.len(), dim, |i, j| ys[i][j]),
            Task::Regression,
        )
        .unwrap();
        (net, placement, data)
    }

    /// 1-D points with residuals `r` and unit basis.
    pub(crate) fn scalar_context(residuals: &[f64]) -> FitContext {
        let points = residuals
            .iter()
            .map(|&r| PointData {
                basis: Matrix::from_element(1, 1, 1.0),
                target: Vector::from_element(1, r),
                class: None,
                cost: Vector::from_element(1, 1.0),
            })
            .collect();
        FitContext::from_points(Task::Regression, points).unwrap()
    }

    #[test]
    fn rotations_are_orthogonal() {
        assert_eq!(random_rotations(3, 0, 1), vec![Matrix::identity(3, 3)]);
        let rs = random_rotations(4, 6, 2);
        assert_eq!(rs.len(), 7);
        for r in &rs {
            assert!((r.transpose() * r - Matrix::identity(4, 4)).amax() < 1e-12);
            assert!((r.determinant().abs() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rs, random_rotations(4, 6, 2));
    }

    #[test]
    fn cost_row_examples() {
        let id = Matrix::identity(2, 2);
        let interval = cost_row(&id, &[], &CostConfig::interval(), std::slice::from_ref(&id)).unwrap();
        assert_eq!(interval.as_slice(), &[1.0, 1.0]);

        let b = Matrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let lengths = CostConfig { kind: CostKind::GeneratorLengths, n_r: 0, seed: 0 };
        assert_eq!(cost_row(&b, &[], &lengths, &[]).unwrap()[0], 5.0);

        let g = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 1.0, -1.0, 0.0]);
        let rot0 = random_rotations(3, 0, 0);
        let rotated = CostConfig { kind: CostKind::RotatedInterval, n_r: 0, seed: 0 };
        assert_eq!(
            cost_row(&g, &[], &rotated, &rot0).unwrap(),
            cost_row(&g, &[], &CostConfig::interval(), &rot0).unwrap()
        );

        let score = CostConfig { kind: CostKind::Score, n_r: 0, seed: 0 };
        assert_eq!(cost_row(&g, &[1], &score, &[]).unwrap().as_slice(), &[2.0, 2.0]);
        let diff = CostConfig { kind: CostKind::ScoreDifference, n_r: 0, seed: 0 };
        assert_eq!(cost_row(&g, &[1], &diff, &[]).unwrap().as_slice(), &[2.0, 4.0]);
        assert!(cost_row(&g, &[], &score, &[]).is_err());
    }

    #[test]
    fn transform_rows() {
        let t = class_transform(3, 1);
        assert_eq!(t, Matrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]));
    }

    #[test]
    fn one_dimensional_max_abs() {
        let (net, pl, data) = identity_setup(&[vec![0.0], vec![1.0], vec![2.0]], &[vec![-0.5], vec![1.2], vec![2.4]]);
        let model = fit_regression(&net, &pl, &data, &CostConfig::interval()).unwrap();
        assert!((model.alpha[0] - 0.5).abs() < 1e-9);
        assert!((model.objective - 1.5).abs() < 1e-9);

        let flat = identity_setup(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![1.0]]);
        let zero = fit_regression(&flat.0, &flat.1, &flat.2, &CostConfig::interval()).unwrap();
        assert_eq!(zero.alpha, vec![0.0]);
    }

    #[test]
    fn per_dimension_max_abs() {
        let xs: Vec<Vec<f64>> = (0..6).map(|m| vec![m as f64, -(m as f64)]).collect();
        let res = [(0.1, -0.3), (-0.4, 0.2), (0.2, 0.1), (0.0, 0.6), (0.3, -0.1), (-0.1, 0.0)];
        let ys: Vec<Vec<f64>> = xs.iter().zip(res).map(|(x, r)| vec![x[0] + r.0, x[1] + r.1]).collect();
        let (net, pl, data) = identity_setup(&xs, &ys);
        let model = fit_regression(&net, &pl, &data, &CostConfig::interval()).unwrap();
        assert!((model.alpha[0] - 0.4).abs() < 1e-9);
        assert!((model.alpha[1] - 0.6).abs() < 1e-9);
        let z = model.prediction_set(&Vector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(z.generators(), &Matrix::from_diagonal(&Vector::from_vec(vec![model.alpha[0], model.alpha[1]])));
        assert!(audit_default(&model, &data).unwrap().is_empty());
    }

    #[test]
    fn unreachable_residual_names_the_point() {
        // Only the first output carries uncertainty; point 1 misses on the second.
        let net = affine_net(Matrix::identity(2, 2), Vector::zeros(2));
        let pl = Placement::new(&net, vec![crate::mlp::UncertaintyIndex::Output { neuron: 0 }], Matrix::identity(1, 1)).unwrap();
        let data = Dataset::new(
            Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]),
            Matrix::from_row_slice(3, 2, &[0.1, 0.0, 1.0, 1.3, 2.2, 2.0]),
            Task::Regression,
        )
        .unwrap();
        match fit_regression(&net, &pl, &data, &CostConfig::interval()) {
            Err(Error::Infeasible { measurements }) => assert_eq!(measurements, vec![1]),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn score_cost_on_regression_is_rejected() {
        let (net, pl, data) = identity_setup(&[vec![0.0]], &[vec![0.0]]);
        let cost = CostConfig { kind: CostKind::Score, n_r: 0, seed: 0 };
        assert!(fit_regression(&net, &pl, &data, &cost).is_err());
    }

    fn two_class(inputs: &[f64], labels: &[usize]) -> (Mlp, Dataset) {
        // f(x) = (x, 0): class 0 wins when x > 0.
        let net = affine_net(Matrix::from_row_slice(2, 1, &[1.0, 0.0]), Vector::zeros(2));
        let data = Dataset::new(
            Matrix::from_column_slice(inputs.len(), 1, inputs),
            Matrix::from_fn(labels.len(), 2, |m, j| if labels[m] == j { 1.0 } else { 0.0 }),
            Task::Classification,
        )
        .unwrap();
        (net, data)
    }

    #[test]
    fn correctly_classified_points_need_no_uncertainty() {
        let (net, data) = two_class(&[1.0, 2.0, -1.0], &[0, 0, 1]);
        let model = fit_classification(&net, &Placement::outputs_only(&net), &data, &CostConfig::interval()).unwrap();
        assert!(model.alpha.iter().all(|&a| a.abs() < 1e-12));
    }

    #[test]
    fn misclassification_margin_sets_alpha() {
        // Point of class 0 with f = (−0.3, 0): margin −0.3 on class 1.
        let (net, data) = two_class(&[-0.3, 1.0], &[0, 0]);
        let pl = Placement::new(&net, vec![crate::mlp::UncertaintyIndex::Output { neuron: 0 }], Matrix::identity(1, 1)).unwrap();
        let model = fit_classification(&net, &pl, &data, &CostConfig::interval()).unwrap();
        assert!((model.alpha[0] - 0.3).abs() < 1e-9);
        assert!(audit_default(&model, &data).unwrap().is_empty());
    }

    #[test]
    fn multilabel_rows_cover_every_label() {
        let net = affine_net(Matrix::from_row_slice(3, 1, &[1.0, 0.0, -1.0]), Vector::zeros(3));
        let data = Dataset::new(
            Matrix::from_column_slice(2, 1, &[0.5, -0.2]),
            Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
            Task::Classification,
        )
        .unwrap();
        let model = fit_classification(&net, &Placement::outputs_only(&net), &data, &CostConfig::interval()).unwrap();
        assert!(audit_default(&model, &data).unwrap().is_empty());
    }

    #[test]
    fn fitted_network_covers_its_calibration_set() {
        let net = random_net(3, 2, &[8, 8], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = Matrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let ys = Matrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(xs, ys, Task::Regression).unwrap();
        let pl = place_orand(&net, 0.3, 2).unwrap();
        let model = fit_regression(&net, &pl, &data, &CostConfig::rotated_interval(4, 3)).unwrap();
        assert!(model.alpha.iter().all(|&a| a >= 0.0));
        assert!(audit_default(&model, &data).unwrap().is_empty());
        let text = serde_json::to_string(&model).unwrap();
        assert_eq!(serde_json::from_str::<ZcpModel>(&text).unwrap(), model);
    }

    #[test]
    fn prediction_set_is_basis_times_alpha() {
        let net = random_net(5, 2, &[6], 2);
        let pl = place_orand(&net, 0.5, 1).unwrap();
        let alpha: Vec<f64> = (0..pl.num_generators()).map(|k| 0.1 * k as f64).collect();
        let model = ZcpModel {
            net: net.clone(),
            placement: pl.clone(),
            alpha: alpha.clone(),
            task: Task::Regression,
            cost: CostConfig::interval(),
            objective: 0.0,
            removed: Vec::new(),
        };
        let x = Vector::from_vec(vec![0.2, -0.4]);
        let z = model.prediction_set(&x).unwrap();
        let expected = net.uncertainty_jacobian(&x, &pl.indices).unwrap() * &pl.template * Matrix::from_diagonal(&Vector::from_vec(alpha));
        assert!((z.generators() - expected).amax() < 1e-15);
        assert_eq!(z.center(), &net.forward(&x).unwrap());

        let zero = ZcpModel { alpha: vec![0.0; pl.num_generators()], ..model };
        assert_eq!(zero.prediction_set(&x).unwrap().interval_norm(), 0.0);
    }

    #[test]
    fn template_scaling_rescales_alpha() {
        let net = random_net(8, 2, &[5], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = Dataset::new(
            Matrix::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0)),
            Matrix::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0)),
            Task::Regression,
        )
        .unwrap();
        let pl = place_orand(&net, 0.4, 3).unwrap();
        let s: Vec<f64> = (0..pl.n_u()).map(|k| 0.5 + k as f64).collect();
        let scaled = pl.with_template(&pl.template * Matrix::from_diagonal(&Vector::from_vec(s.clone()))).unwrap();
        let a = fit_regression(&net, &pl, &data, &CostConfig::interval()).unwrap();
        let b = fit_regression(&net, &scaled, &data, &CostConfig::interval()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-7 * a.objective.max(1.0));
        // α' = S⁻¹α reproduces the same prediction sets.
        let mapped = ZcpModel {
            placement: scaled,
            alpha: a.alpha.iter().zip(&s).map(|(x, sk)| x / sk).collect(),
            ..a.clone()
        };
        let x = Vector::from_vec(vec![0.3, -0.7]);
        let (za, zm) = (a.prediction_set(&x).unwrap(), mapped.prediction_set(&x).unwrap());
        assert!((za.generators() - zm.generators()).amax() < 1e-12);
        assert!(audit_default(&b, &data).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_a_point_never_lowers_the_objective(res in prop::collection::vec(-1.0..1.0f64, 2..10), extra in -1.5..1.5f64) {
            let ctx = scalar_context(&res);
            let base = ctx.solve_all().unwrap().objective;
            let mut more = res.clone();
            more.push(extra);
            let grown = scalar_context(&more).solve_all().unwrap().objective;
            prop_assert!(grown >= base - 1e-9);
        }

        #[test]
        fn scalar_alpha_is_max_abs_residual(res in prop::collection::vec(-2.0..2.0f64, 1..12)) {
            let fit = scalar_context(&res).solve_all().unwrap();
            let max = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
            prop_assert!((fit.alpha[0] - max).abs() < 1e-9);
        }
    }
}
