//! Outlier removal: boundary-point detection, exhaustive and greedy search
//! trees, the mixed-integer formulation, and the RMSE baseline.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CostConfig, Fit, FitContext, ZcpModel};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, solve_milp, LinearProgram, LpStatus, MilpOptions, MilpProgram};
use crate::mlp::Mlp;
use crate::placement::Placement;
use crate::Vector;

/// A measurement is a boundary point when its slack is at most this.
pub const DELTA_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMethod {
    Search,
    Greedy,
    Milp,
    Rmse,
}

impl std::str::FromStr for OutlierMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "search" => Ok(Self::Search),
            "greedy" => Ok(Self::Greedy),
            "milp" => Ok(Self::Milp),
            "rmse" => Ok(Self::Rmse),
            other => Err(Error::InvalidArgument(format!("unknown outlier method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_expanded: usize,
    pub lp_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierResult {
    pub method: OutlierMethod,
    /// Removed calibration points, ascending (indices into the fit context).
    pub removed: Vec<usize>,
    /// Objective of the refit on the retained points.
    pub objective: f64,
    pub alpha: Vec<f64>,
    /// Objective of the mixed-integer program (costs over all points).
    pub milp_objective: Option<f64>,
    /// False only when the MILP node cap stopped the search early.
    pub proven_optimal: bool,
    pub stats: SearchStats,
}

impl OutlierResult {
    /// Removed rows of the original dataset.
    pub fn removed_rows(&self, ctx: &FitContext) -> Vec<usize> {
        let rows: BTreeSet<usize> = self.removed.iter().map(|&m| ctx.source[m]).collect();
        rows.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    /// Points (from the active set) whose slack is at most [`DELTA_TOL`].
    pub indices: Vec<usize>,
    /// Slack of every active point, in the order given.
    pub delta: Vec<f64>,
}

/// For each active point, the largest `δ` such that the point stays inside
/// the set when every used generator is shrunk by `δ`:
/// `max δ` s.t. `±β_m + f δ ≤ α*`, containment at `α*`, `0 ≤ δ ≤ cap`,
/// with `f_j = [α*_j > 0]` and `cap = max_j α*_j` (1 when `α* = 0`).
pub fn boundary_points(ctx: &FitContext, active: &[usize], alpha_star: &Vector) -> Result<Boundary> {
    let max_alpha = alpha_star.max();
    let cap = if max_alpha > 0.0 { max_alpha } else { 1.0 };
    // Absorbs solver round-off in α*; far below DELTA_TOL.
    let padded: Vec<f64> = alpha_star.iter().map(|a| a + 1e-10 * (1.0 + a)).collect();
    let delta = active
        .par_iter()
        .map(|&m| {
            let mut lp = LinearProgram::new();
            let d = lp.add_var(-1.0, 0.0, cap);
            let beta: Vec<usize> = (0..padded.len())
                .map(|k| lp.add_var(0.0, -padded[k], padded[k]))
                .collect();
            for (k, &a) in alpha_star.iter().enumerate() {
                if a > 0.0 {
                    lp.add_le(vec![(beta[k], 1.0), (d, 1.0)], padded[k]);
                    lp.add_le(vec![(beta[k], -1.0), (d, 1.0)], padded[k]);
                }
            }
            ctx.add_containment(&mut lp, m, &beta, None);
            let sol = solve_lp(&lp, &ctx.lp_options)?;
            match sol.status {
                LpStatus::Optimal => Ok(sol.x[d]),
                _ => Err(Error::InvalidArgument(format!(
                    "point {m} is not contained at the given α; refit before detecting boundary points"
                ))),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let indices = active
        .iter()
        .zip(&delta)
        .filter(|(_, &d)| d <= DELTA_TOL)
        .map(|(&m, _)| m)
        .collect();
    Ok(Boundary { indices, delta })
}

fn complement(n: usize, removed: &[usize]) -> Vec<usize> {
    (0..n).filter(|m| removed.binary_search(m).is_err()).collect()
}

fn check_n_out(ctx: &FitContext, n_out: usize) -> Result<()> {
    if n_out >= ctx.len() {
        return Err(Error::InvalidArgument(format!(
            "n_out = {n_out} leaves no calibration points out of {}",
            ctx.len()
        )));
    }
    Ok(())
}

fn result(method: OutlierMethod, removed: Vec<usize>, fit: &Fit, stats: SearchStats) -> OutlierResult {
    OutlierResult {
        method,
        removed,
        objective: fit.objective,
        alpha: fit.alpha.iter().copied().collect(),
        milp_objective: None,
        proven_optimal: true,
        stats,
    }
}

/// Points whose removal is tried below a node: its boundary points, or the
/// lowest-index retained point when no constraint binds.
fn children_of(ctx: &FitContext, removed: &[usize], fit: &Fit, stats: &mut SearchStats) -> Result<Vec<usize>> {
    let active = complement(ctx.len(), removed);
    let b = boundary_points(ctx, &active, &fit.alpha)?;
    stats.nodes_expanded += 1;
    stats.lp_solves += active.len();
    Ok(if b.indices.is_empty() { vec![active[0]] } else { b.indices })
}

fn with_removed(removed: &[usize], m: usize) -> Vec<usize> {
    let mut child = removed.to_vec();
    let pos = child.binary_search(&m).unwrap_err();
    child.insert(pos, m);
    child
}

/// Lowest objective, ties broken by the lexicographically smallest set.
fn best<'a>(candidates: impl Iterator<Item = (&'a Vec<usize>, &'a Fit)>) -> Option<(&'a Vec<usize>, &'a Fit)> {
    candidates.min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then_with(|| a.0.cmp(b.0)))
}

/// Exhaustive search tree of depth `n_out`; each node removes one boundary
/// point of its parent and refits. Identical removal sets are solved once.
pub fn detect_search(ctx: &FitContext, n_out: usize) -> Result<OutlierResult> {
    check_n_out(ctx, n_out)?;
    let mut stats = SearchStats::default();
    let mut memo: HashMap<Vec<usize>, Fit> = HashMap::new();
    memo.insert(Vec::new(), ctx.solve_all()?);
    stats.lp_solves += 1;
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..n_out {
        let mut next = BTreeSet::new();
        for node in &level {
            for m in children_of(ctx, node, &memo[node], &mut stats)? {
                next.insert(with_removed(node, m));
            }
        }
        let fresh: Vec<Vec<usize>> = next.iter().filter(|s| !memo.contains_key(*s)).cloned().collect();
        let fits = fresh
            .par_iter()
            .map(|s| ctx.solve(&complement(ctx.len(), s)))
            .collect::<Result<Vec<_>>>()?;
        stats.lp_solves += fresh.len();
        memo.extend(fresh.into_iter().zip(fits));
        level = next.into_iter().collect();
    }
    let (removed, fit) = best(level.iter().map(|s| (s, &memo[s]))).expect("search level is never empty");
    Ok(result(OutlierMethod::Search, removed.clone(), fit, stats))
}

/// Greedy descent: at each depth keep only the child with the lowest
/// objective (ties to the lowest point index). Returns one result per depth
/// `0..=n_out`.
pub fn detect_greedy_path(ctx: &FitContext, n_out: usize) -> Result<Vec<OutlierResult>> {
    check_n_out(ctx, n_out)?;
    let mut stats = SearchStats::default();
    let mut removed: Vec<usize> = Vec::new();
    let mut fit = ctx.solve_all()?;
    stats.lp_solves += 1;
    let mut path = vec![result(OutlierMethod::Greedy, removed.clone(), &fit, stats)];
    for _ in 0..n_out {
        let candidates = children_of(ctx, &removed, &fit, &mut stats)?;
        let fits = candidates
            .par_iter()
            .map(|&m| ctx.solve(&complement(ctx.len(), &with_removed(&removed, m))))
            .collect::<Result<Vec<_>>>()?;
        stats.lp_solves += candidates.len();
        let (i, _) = fits
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(candidates[a.0].cmp(&candidates[b.0])))
            .expect("at least one child");
        removed = with_removed(&removed, candidates[i]);
        fit = fits[i].clone();
        path.push(result(OutlierMethod::Greedy, removed.clone(), &fit, stats));
    }
    Ok(path)
}

pub fn detect_greedy(ctx: &FitContext, n_out: usize) -> Result<OutlierResult> {
    Ok(detect_greedy_path(ctx, n_out)?.pop().expect("path has depth 0"))
}

/// The mixed-integer program: containment of point `m` is enforced only when
/// the binary `ρ_m = 1`, with `Σ ρ ≥ n_m − n_out`. Costs are summed over
/// every point.
pub fn milp_program(ctx: &FitContext, n_out: usize) -> (MilpProgram, Vec<usize>, Vec<usize>) {
    let mut lp = LinearProgram::new();
    let all: Vec<usize> = (0..ctx.len()).collect();
    let coeffs = ctx.objective_coefficients(&all);
    let alpha: Vec<usize> = coeffs.iter().map(|&c| lp.add_var(c, 0.0, f64::INFINITY)).collect();
    let rho: Vec<usize> = all.iter().map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
    for m in 0..ctx.len() {
        let beta = FitContext::add_beta(&mut lp, &alpha);
        ctx.add_containment(&mut lp, m, &beta, Some(rho[m]));
    }
    lp.add_ge(rho.iter().map(|&r| (r, 1.0)).collect(), (ctx.len() - n_out) as f64);
    (
        MilpProgram {
            lp,
            binaries: rho.clone(),
        },
        alpha,
        rho,
    )
}

pub fn detect_milp(ctx: &FitContext, n_out: usize, opts: &MilpOptions) -> Result<OutlierResult> {
    check_n_out(ctx, n_out)?;
    let (program, _, rho) = milp_program(ctx, n_out);
    let sol = solve_milp(&program, opts)?;
    if !sol.solution.is_optimal() {
        return Err(Error::Infeasible { measurements: Vec::new() });
    }
    let removed: Vec<usize> = (0..ctx.len()).filter(|&m| sol.solution.x[rho[m]] < 0.5).collect();
    let fit = ctx.solve(&complement(ctx.len(), &removed))?;
    let stats = SearchStats {
        nodes_expanded: sol.nodes,
        lp_solves: sol.lp_solves + 1,
    };
    let mut out = result(OutlierMethod::Milp, removed, &fit, stats);
    out.milp_objective = Some(sol.solution.objective);
    out.proven_optimal = sol.proven_optimal;
    Ok(out)
}

/// Prediction error of every point: `‖y − f(x)‖₂`, with `y` one-hot for
/// classification.
pub fn prediction_errors(ctx: &FitContext) -> Vec<f64> {
    ctx.points
        .iter()
        .map(|p| match (ctx.task, p.class) {
            (Task::Classification, Some(c)) => {
                let mut e = -p.target.clone();
                e[c] += 1.0;
                e.norm()
            }
            _ => p.target.norm(),
        })
        .collect()
}

/// Removes the `n_out` points with the largest prediction error (ties to the
/// lowest index) and refits.
pub fn detect_rmse(ctx: &FitContext, n_out: usize) -> Result<OutlierResult> {
    check_n_out(ctx, n_out)?;
    let errors = prediction_errors(ctx);
    let mut order: Vec<usize> = (0..ctx.len()).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    let mut removed = order[..n_out].to_vec();
    removed.sort_unstable();
    let fit = ctx.solve(&complement(ctx.len(), &removed))?;
    Ok(result(OutlierMethod::Rmse, removed, &fit, SearchStats { nodes_expanded: 0, lp_solves: 1 }))
}

pub fn detect(ctx: &FitContext, n_out: usize, method: OutlierMethod, milp: &MilpOptions) -> Result<OutlierResult> {
    match method {
        OutlierMethod::Search => detect_search(ctx, n_out),
        OutlierMethod::Greedy => detect_greedy(ctx, n_out),
        OutlierMethod::Milp => detect_milp(ctx, n_out, milp),
        OutlierMethod::Rmse => detect_rmse(ctx, n_out),
    }
}

/// Calibrates with `n_out` outliers removed by `method`.
pub fn fit_zcp(
    net: &Mlp,
    placement: &Placement,
    data: &Dataset,
    cost: &CostConfig,
    n_out: usize,
    method: OutlierMethod,
    milp: &MilpOptions,
) -> Result<(ZcpModel, OutlierResult)> {
    let ctx = FitContext::new(net, placement, data, cost)?;
    let res = detect(&ctx, n_out, method, milp)?;
    Ok((model_from_result(net, placement, &ctx, cost, &res), res))
}

/// The calibrated model behind an outlier-detection result on `ctx`.
pub fn model_from_result(net: &Mlp, placement: &Placement, ctx: &FitContext, cost: &CostConfig, res: &OutlierResult) -> ZcpModel {
    let fit = Fit {
        alpha: Vector::from_column_slice(&res.alpha),
        objective: res.objective,
        lp_iterations: 0,
    };
    ZcpModel::from_fit(net, placement, ctx.task, cost, fit, res.removed_rows(ctx))
}

/// Minimum refit objective over every way of removing `n_out` points.
pub fn brute_force(ctx: &FitContext, n_out: usize) -> Result<(Vec<usize>, f64)> {
    brute_force_by(ctx, n_out, |kept| ctx.solve(kept))
}

/// As [`brute_force`], but scoring each subset by the mixed-integer
/// objective (costs over every point, containment only for retained ones).
pub fn brute_force_milp(ctx: &FitContext, n_out: usize) -> Result<(Vec<usize>, f64)> {
    let all: Vec<usize> = (0..ctx.len()).collect();
    brute_force_by(ctx, n_out, |kept| ctx.solve_with(kept, &all))
}

fn brute_force_by(ctx: &FitContext, n_out: usize, solve: impl Fn(&[usize]) -> Result<Fit> + Sync) -> Result<(Vec<usize>, f64)> {
    check_n_out(ctx, n_out)?;
    let mut subsets = Vec::new();
    crate::zonotope::for_each_combination(ctx.len(), n_out, |c| subsets.push(c.to_vec()));
    let fits = subsets
        .par_iter()
        .map(|s| solve(&complement(ctx.len(), s)))
        .collect::<Result<Vec<_>>>()?;
    let (s, f) = best(subsets.iter().zip(&fits)).expect("at least one subset");
    Ok((s.clone(), f.objective))
}
