//! Probabilistic coverage guarantees for predictors calibrated with `n_θ`
//! decision variables on `n_m` points, `n_out` of which may be discarded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeQuery {
    pub n_m: u64,
    pub n_theta: u64,
    pub n_out: u64,
}

impl GuaranteeQuery {
    pub fn new(n_m: u64, n_theta: u64, n_out: u64) -> Result<Self> {
        let q = Self { n_m, n_theta, n_out };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_m == 0 || self.n_theta == 0 || self.n_out >= self.n_m {
            return Err(Error::InvalidArgument(format!(
                "need n_m ≥ 1, n_theta ≥ 1 and n_out < n_m (got n_m = {}, n_theta = {}, n_out = {})",
                self.n_m, self.n_theta, self.n_out
            )));
        }
        Ok(())
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `log ζ`, where
/// `ζ = C(n_out+n_θ−1, n_out) · Σ_{i<n_out+n_θ} C(n_m, i) ε^i (1−ε)^{n_m−i}`.
pub fn ln_zeta(q: &GuaranteeQuery, epsilon: f64) -> Result<f64> {
    q.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("ε must lie in (0,1), got {epsilon}")));
    }
    let d = q.n_out + q.n_theta - 1;
    let (le, l1e) = (epsilon.ln(), (-epsilon).ln_1p());
    let terms: Vec<f64> = (0..=d.min(q.n_m))
        .map(|i| ln_choose(q.n_m, i) + i as f64 * le + (q.n_m - i) as f64 * l1e)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok(ln_choose(d, q.n_out) + sum)
}

/// The confidence parameter `ζ`. Values above 1 mean the bound is vacuous
/// and are logged as such.
pub fn zeta(q: &GuaranteeQuery, epsilon: f64) -> Result<f64> {
    let z = ln_zeta(q, epsilon)?.exp();
    if z > 1.0 {
        log::warn!("ζ = {z} exceeds 1 for {q:?} at ε = {epsilon}; the bound is vacuous");
    }
    Ok(z)
}

/// Solves `ζ(ε) = target` by bisection on `ε ∈ (0,1)` (tolerance 1e−9).
pub fn solve_epsilon(q: &GuaranteeQuery, target: f64) -> Result<f64> {
    q.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target ζ must lie in (0,1), got {target}")));
    }
    let goal = target.ln();
    // ζ decreases in ε; compare in log space so tiny ζ stays resolvable.
    let f = |e: f64| ln_zeta(q, e).map(|z| z - goal);
    let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
    if f(lo)? < 0.0 {
        return Err(Error::InvalidArgument(format!("ζ stays below {target} on all of (0,1) for {q:?}")));
    }
    if f(hi)? > 0.0 {
        return Err(Error::InvalidArgument(format!("ζ stays above {target} on all of (0,1) for {q:?}")));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Guaranteed coverage `1 − ε` holding with probability `confidence`,
/// i.e. solving `ζ(ε) = 1 − confidence`.
pub fn guaranteed_coverage(q: &GuaranteeQuery, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0,1), got {confidence}")));
    }
    Ok(1.0 - solve_epsilon(q, 1.0 - confidence)?)
}
