//! Linear programs and mixed-binary programs.
//!
//! Every optimization problem in the toolkit (calibration, containment,
//! boundary detection, class extraction, outlier removal) is assembled as a
//! [`LinearProgram`] in minimization form with sparse rows. Continuous
//! programs are handed to a sparse revised simplex (`microlp`); programs with
//! binary variables go through the best-first branch-and-bound in
//! [`solve_milp`], which only asks the backend for LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::Duration;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOptions, SolveOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),

    /// The solve budget ran out before the simplex finished.
    #[error("solve interrupted after {iterations} simplex iterations")]
    Interrupted { iterations: u64 },

    #[error("LP relaxation at the root of the branch-and-bound tree is infeasible")]
    InfeasibleRoot,

    #[error("node cap of {nodes} reached without an integer-feasible incumbent")]
    NodeCapWithoutIncumbent { nodes: usize },

    #[error("LP backend failure: {0}")]
    Backend(String),
}

/// A sparse constraint row: `(variable index, coefficient)` pairs.
pub type Row = Vec<(usize, f64)>;

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed constraint residual, relative to `1 + |rhs|`.
    pub feasibility: f64,
    /// Relative slack when pruning branch-and-bound nodes against the incumbent.
    pub optimality: f64,
    /// Distance from 0/1 within which a binary counts as integral.
    pub integrality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            optimality: 1e-9,
            integrality: 1e-6,
        }
    }
}

/// `min cᵀx  s.t.  A_ub x ≤ b_ub,  A_eq x = b_eq,  lo ≤ x ≤ hi`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub a_ub: Vec<Row>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Row>,
    pub b_eq: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with objective coefficient `cost` and bounds
    /// `[lo, hi]` (infinite bounds allowed); returns its index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn add_le(&mut self, row: Row, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_ge(&mut self, row: Row, rhs: f64) {
        self.a_ub
            .push(row.into_iter().map(|(j, a)| (j, -a)).collect());
        self.b_ub.push(-rhs);
    }

    pub fn add_eq(&mut self, row: Row, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.a_ub.len() + self.a_eq.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest scaled violation of any bound or constraint at `x`; each row
    /// violation is divided by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &Row| row.iter().map(|&(j, a)| a * x[j]).sum::<f64>();
        let mut worst = 0.0f64;
        for (&(lo, hi), &v) in self.bounds.iter().zip(x) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max((dot(row) - b) / (1.0 + b.abs()));
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row) - b).abs() / (1.0 + b.abs()));
        }
        worst
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(LpError::Malformed("row and rhs counts differ".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("invalid bounds on x{i}")));
            }
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            for &(j, a) in row {
                if j >= n {
                    return Err(LpError::Malformed(format!("row references x{j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed("non-finite row coefficient".into()));
                }
            }
        }
        if self.b_ub.iter().chain(&self.b_eq).any(|b| !b.is_finite()) {
            return Err(LpError::Malformed("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// Plain-text dump in a normalized LP layout, for debugging.
    pub fn to_lp_text(&self, binaries: &[usize]) -> String {
        let term = |a: f64, j: usize| {
            if a < 0.0 {
                format!(" - {} x{j}", -a)
            } else {
                format!(" + {a} x{j}")
            }
        };
        let mut out = String::from("minimize\n  obj:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                out.push_str(&term(c, j));
            }
        }
        out.push_str("\nsubject to\n");
        for (i, (row, b)) in self.a_ub.iter().zip(&self.b_ub).enumerate() {
            let _ = write!(out, "  ub{i}:");
            for &(j, a) in row {
                out.push_str(&term(a, j));
            }
            let _ = writeln!(out, " <= {b}");
        }
        for (i, (row, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let _ = write!(out, "  eq{i}:");
            for &(j, a) in row {
                out.push_str(&term(a, j));
            }
            let _ = writeln!(out, " = {b}");
        }
        out.push_str("bounds\n");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let _ = writeln!(out, "  {lo} <= x{j} <= {hi}");
        }
        if !binaries.is_empty() {
            out.push_str("binary\n");
            for j in binaries {
                let _ = writeln!(out, "  x{j}");
            }
        }
        out.push_str("end\n");
        out
    }
}

/// A [`LinearProgram`] whose listed variables must take values in `{0, 1}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; empty unless the status is optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            x: Vec::new(),
            objective,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LpOptions {
    pub tolerances: Tolerances,
    /// Wall-clock budget; `None` means unlimited.
    pub time_limit: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub tolerances: Tolerances,
    /// Maximum number of LP relaxations solved, root included.
    pub node_cap: usize,
    pub time_limit: Option<Duration>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            node_cap: 20_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub solution: LpSolution,
    /// False when the node cap stopped the search with an incumbent in hand.
    pub proven_optimal: bool,
    pub nodes: usize,
    pub lp_solves: usize,
}

struct Backend {
    problem: Problem,
    vars: Vec<microlp::Variable>,
}

/// Rows with no nonzero coefficient are dropped here; returns `None` when one
/// of them is unsatisfiable.
fn build_backend(p: &LinearProgram, relax_binaries: &[usize]) -> Option<Backend> {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let mut bounds = p.bounds.clone();
    for &j in relax_binaries {
        bounds[j] = (bounds[j].0.max(0.0), bounds[j].1.min(1.0));
    }
    let vars: Vec<_> = p
        .objective
        .iter()
        .zip(&bounds)
        .map(|(&c, &b)| problem.add_var(c, b))
        .collect();
    let mut add = |row: &Row, op: ComparisonOp, rhs: f64| -> bool {
        let merged = merge_row(row);
        if merged.is_empty() {
            return match op {
                ComparisonOp::Le => 0.0 <= rhs,
                ComparisonOp::Ge => 0.0 >= rhs,
                ComparisonOp::Eq => rhs == 0.0,
            };
        }
        let terms: Vec<_> = merged.iter().map(|&(j, a)| (vars[j], a)).collect();
        problem.add_constraint(terms.as_slice(), op, rhs);
        true
    };
    for (row, &b) in p.a_ub.iter().zip(&p.b_ub) {
        if !add(row, ComparisonOp::Le, b) {
            return None;
        }
    }
    for (row, &b) in p.a_eq.iter().zip(&p.b_eq) {
        if !add(row, ComparisonOp::Eq, b) {
            return None;
        }
    }
    Some(Backend { problem, vars })
}

fn merge_row(row: &Row) -> Row {
    let mut sorted = row.clone();
    sorted.sort_by_key(|&(j, _)| j);
    let mut out: Row = Vec::with_capacity(sorted.len());
    for (j, a) in sorted {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

fn backend_options(time_limit: Option<Duration>) -> SolveOptions {
    let mut opts = SolveOptions::default();
    opts.time_limit = time_limit;
    opts
}

fn extract(outcome: SolveOutcome) -> Result<microlp::Solution, LpError> {
    match outcome {
        SolveOutcome::Solution(s) => Ok(s),
        SolveOutcome::Interrupted(i) => Err(LpError::Interrupted {
            iterations: i.stats().lp_iterations,
        }),
    }
}

fn point_of(sol: &microlp::Solution, vars: &[microlp::Variable]) -> Vec<f64> {
    vars.iter().map(|&v| sol.var_value_raw(v)).collect()
}

/// Solves a continuous linear program.
///
/// Infeasible and unbounded programs are reported through
/// [`LpSolution::status`]; errors are reserved for malformed input, budget
/// overruns and backend failures.
pub fn solve_lp(p: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    p.validate()?;
    let Some(backend) = build_backend(p, &[]) else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    };
    if p.num_vars() == 0 {
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            x: Vec::new(),
            objective: 0.0,
            iterations: 0,
        });
    }
    let outcome = match backend.problem.solve_with(backend_options(opts.time_limit)) {
        Ok(o) => o,
        Err(microlp::Error::Infeasible) => {
            return Ok(LpSolution::without_point(LpStatus::Infeasible))
        }
        Err(microlp::Error::Unbounded) => {
            return Ok(LpSolution::without_point(LpStatus::Unbounded))
        }
        Err(e) => return Err(LpError::Backend(e.to_string())),
    };
    let sol = extract(outcome)?;
    let x = point_of(&sol, &backend.vars);
    let violation = p.max_violation(&x);
    if violation > opts.tolerances.feasibility {
        log::warn!(
            "LP solution violates constraints by {violation:.3e} (tolerance {:.1e})",
            opts.tolerances.feasibility
        );
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: p.objective_value(&x),
        iterations: sol.stats().lp_iterations,
        x,
    })
}

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound (then oldest node) wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Relaxation {
    Solved(Vec<f64>),
    Infeasible,
}

struct Tree<'a> {
    program: &'a MilpProgram,
    root: microlp::Solution,
    vars: Vec<microlp::Variable>,
    lp_solves: usize,
}

impl Tree<'_> {
    /// Re-derives a node's relaxation from the root basis by applying its
    /// fixings as warm-started edits.
    fn relax(&mut self, fixings: &[(usize, f64)]) -> Result<Relaxation, LpError> {
        let mut sol = self.root.clone();
        for &(j, v) in fixings {
            self.lp_solves += 1;
            match sol.fix_var(self.vars[j], v) {
                Ok(outcome) => sol = extract(outcome)?,
                Err(microlp::Error::Infeasible) => return Ok(Relaxation::Infeasible),
                Err(e) => return Err(LpError::Backend(e.to_string())),
            }
        }
        Ok(Relaxation::Solved(point_of(&sol, &self.vars)))
    }

    fn most_fractional(&self, x: &[f64], int_tol: f64) -> Option<usize> {
        self.program
            .binaries
            .iter()
            .copied()
            .filter(|&j| {
                let v = x[j];
                v.min(1.0 - v).abs() > int_tol && (v - v.round()).abs() > int_tol
            })
            .min_by(|&a, &b| {
                (x[a] - 0.5)
                    .abs()
                    .total_cmp(&(x[b] - 0.5).abs())
                    .then(a.cmp(&b))
            })
    }

    fn snap(&self, mut x: Vec<f64>) -> Vec<f64> {
        for &j in &self.program.binaries {
            x[j] = x[j].round().clamp(0.0, 1.0);
        }
        x
    }
}

/// Best-first branch-and-bound over the binary variables of `p`.
///
/// Each node is an LP relaxation with some binaries fixed; the open node with
/// the lowest relaxation bound is expanded next, branching on the most
/// fractional binary. The search is exact when it finishes under the node
/// cap; otherwise the best incumbent is returned with
/// `proven_optimal == false`.
pub fn solve_milp(p: &MilpProgram, opts: &MilpOptions) -> Result<MilpSolution, LpError> {
    p.lp.validate()?;
    if let Some(&j) = p.binaries.iter().find(|&&j| j >= p.lp.num_vars()) {
        return Err(LpError::Malformed(format!("binary index x{j} out of range")));
    }
    let int_tol = opts.tolerances.integrality;
    let Some(backend) = build_backend(&p.lp, &p.binaries) else {
        return Err(LpError::InfeasibleRoot);
    };
    let root = match backend.problem.solve_with(backend_options(opts.time_limit)) {
        Ok(o) => extract(o)?,
        Err(microlp::Error::Infeasible) => return Err(LpError::InfeasibleRoot),
        Err(microlp::Error::Unbounded) => {
            return Ok(MilpSolution {
                solution: LpSolution::without_point(LpStatus::Unbounded),
                proven_optimal: true,
                nodes: 1,
                lp_solves: 1,
            })
        }
        Err(e) => return Err(LpError::Backend(e.to_string())),
    };
    let root_x = point_of(&root, &backend.vars);
    let mut tree = Tree {
        program: p,
        root,
        vars: backend.vars,
        lp_solves: 1,
    };

    let objective = |x: &[f64]| p.lp.objective_value(x);
    let mut nodes = 1usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut seq = 0usize;
    let mut open = BinaryHeap::new();

    if tree.most_fractional(&root_x, int_tol).is_none() {
        let x = tree.snap(root_x);
        incumbent = Some((objective(&x), x));
    } else {
        // Rounding heuristic for an early incumbent.
        let rounded: Vec<_> = p.binaries.iter().map(|&j| (j, root_x[j].round())).collect();
        if let Relaxation::Solved(x) = tree.relax(&rounded)? {
            let x = tree.snap(x);
            incumbent = Some((objective(&x), x));
        }
        open.push(Node {
            bound: objective(&root_x),
            seq,
            fixings: Vec::new(),
            x: root_x,
        });
    }

    let prunes = |bound: f64, inc: &Option<(f64, Vec<f64>)>| match inc {
        Some((best, _)) => bound >= best - opts.tolerances.optimality * best.abs().max(1.0),
        None => false,
    };

    let mut capped = false;
    while let Some(node) = open.pop() {
        if prunes(node.bound, &incumbent) {
            continue;
        }
        if nodes >= opts.node_cap {
            capped = true;
            break;
        }
        let Some(branch) = tree.most_fractional(&node.x, int_tol) else {
            continue;
        };
        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((branch, value));
            nodes += 1;
            let Relaxation::Solved(x) = tree.relax(&fixings)? else {
                continue;
            };
            let bound = objective(&x);
            if prunes(bound, &incumbent) {
                continue;
            }
            if tree.most_fractional(&x, int_tol).is_none() {
                let x = tree.snap(x);
                let obj = objective(&x);
                if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
                    incumbent = Some((obj, x));
                }
            } else {
                seq += 1;
                open.push(Node {
                    bound,
                    seq,
                    fixings,
                    x,
                });
            }
        }
    }

    match incumbent {
        Some((obj, x)) => Ok(MilpSolution {
            solution: LpSolution {
                status: LpStatus::Optimal,
                objective: obj,
                x,
                iterations: 0,
            },
            proven_optimal: !capped,
            nodes,
            lp_solves: tree.lp_solves,
        }),
        None if capped => Err(LpError::NodeCapWithoutIncumbent { nodes }),
        None => Ok(MilpSolution {
            solution: LpSolution::without_point(LpStatus::Infeasible),
            proven_optimal: true,
            nodes,
            lp_solves: tree.lp_solves,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_opts() -> LpOptions {
        LpOptions::default()
    }

    #[test]
    fn single_lower_bound() {
        // min x  s.t. x >= 3
        let mut p = LinearProgram::new();
        let x = p.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        p.add_ge(vec![(x, 1.0)], 3.0);
        let s = solve_lp(&p, &lp_opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_corner() {
        // min -x-y  s.t. x+y <= 1, x,y >= 0
        let mut p = LinearProgram::new();
        let x = p.add_var(-1.0, 0.0, f64::INFINITY);
        let y = p.add_var(-1.0, 0.0, f64::INFINITY);
        p.add_le(vec![(x, 1.0), (y, 1.0)], 1.0);
        let s = solve_lp(&p, &lp_opts()).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let mut p = LinearProgram::new();
        let x = p.add_var(1.0, 0.0, 1.0);
        p.add_ge(vec![(x, 1.0)], 2.0);
        assert_eq!(solve_lp(&p, &lp_opts()).unwrap().status, LpStatus::Infeasible);

        let mut q = LinearProgram::new();
        q.add_var(-1.0, 0.0, f64::INFINITY);
        assert_eq!(solve_lp(&q, &lp_opts()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn empty_rows_are_checked_not_sent() {
        let mut p = LinearProgram::new();
        p.add_var(1.0, 0.0, 1.0);
        p.add_le(vec![], 1.0);
        assert!(solve_lp(&p, &lp_opts()).unwrap().is_optimal());
        p.add_eq(vec![(0, 0.0)], 1.0);
        assert_eq!(solve_lp(&p, &lp_opts()).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn malformed_programs_are_rejected() {
        let mut p = LinearProgram::new();
        p.add_var(1.0, 0.0, 1.0);
        p.add_le(vec![(3, 1.0)], 1.0);
        assert!(matches!(solve_lp(&p, &lp_opts()), Err(LpError::Malformed(_))));
    }

    #[test]
    fn integral_relaxation_takes_one_node() {
        // min -x0 - x1, x0 + x1 <= 2, both binary: relaxation is already (1,1).
        let mut lp = LinearProgram::new();
        let a = lp.add_var(-1.0, 0.0, 1.0);
        let b = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_le(vec![(a, 1.0), (b, 1.0)], 2.0);
        let s = solve_milp(
            &MilpProgram {
                lp,
                binaries: vec![a, b],
            },
            &MilpOptions::default(),
        )
        .unwrap();
        assert_eq!(s.nodes, 1);
        assert!(s.proven_optimal);
        assert_eq!(s.solution.x, vec![1.0, 1.0]);
    }

    #[test]
    fn half_sum_of_binaries_is_infeasible() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(0.0, 0.0, 1.0);
        let b = lp.add_var(0.0, 0.0, 1.0);
        lp.add_eq(vec![(a, 1.0), (b, 1.0)], 0.5);
        let s = solve_milp(
            &MilpProgram {
                lp,
                binaries: vec![a, b],
            },
            &MilpOptions::default(),
        )
        .unwrap();
        assert_eq!(s.solution.status, LpStatus::Infeasible);
    }

    #[test]
    fn infeasible_root_is_an_error() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(0.0, 0.0, 1.0);
        lp.add_ge(vec![(a, 1.0)], 2.0);
        let r = solve_milp(
            &MilpProgram {
                lp,
                binaries: vec![a],
            },
            &MilpOptions::default(),
        );
        assert_eq!(r, Err(LpError::InfeasibleRoot));
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let values = [10.0, 13.0, 7.0, 8.0, 4.0, 11.0];
        let weights = [5.0, 6.0, 3.0, 4.0, 2.0, 5.5];
        let cap = 13.0;
        let mut lp = LinearProgram::new();
        let vars: Vec<_> = values.iter().map(|&v| lp.add_var(-v, 0.0, 1.0)).collect();
        lp.add_le(vars.iter().zip(&weights).map(|(&j, &w)| (j, w)).collect(), cap);
        let s = solve_milp(
            &MilpProgram {
                lp,
                binaries: vars,
            },
            &MilpOptions::default(),
        )
        .unwrap();

        let mut best = 0.0f64;
        for mask in 0u32..64 {
            let (mut v, mut w) = (0.0, 0.0);
            for i in 0..6 {
                if mask >> i & 1 == 1 {
                    v += values[i];
                    w += weights[i];
                }
            }
            if w <= cap {
                best = best.max(v);
            }
        }
        assert!(s.proven_optimal);
        assert!((s.solution.objective + best).abs() < 1e-9, "{} vs {best}", s.solution.objective);
    }

    #[test]
    fn lp_text_dump_lists_every_section() {
        let mut p = LinearProgram::new();
        let x = p.add_var(2.0, 0.0, 1.0);
        p.add_le(vec![(x, 1.0)], 1.0);
        p.add_eq(vec![(x, -1.0)], -0.5);
        let text = p.to_lp_text(&[x]);
        for part in ["minimize", "+ 2 x0", "ub0:", "eq0: - 1 x0 = -0.5", "bounds", "binary", "end"] {
            assert!(text.contains(part), "missing {part:?} in\n{text}");
        }
    }
}
