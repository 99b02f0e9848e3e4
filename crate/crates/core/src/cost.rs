//! CVaR cost estimation from sampled measurement outcomes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_statevector, AnsatzSpec, BasisSampler, ParamVector};
use crate::error::{invalid, Result};
use crate::qubo::QuboInstance;

/// CVaR tail fraction, `0 < alpha <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CvarAlpha(f64);

impl CvarAlpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return invalid(format!("CVaR alpha must lie in (0, 1], got {alpha}"));
        }
        Ok(CvarAlpha(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CvarAlpha {
    type Error = crate::Error;

    fn try_from(v: f64) -> Result<Self> {
        CvarAlpha::new(v)
    }
}

impl From<CvarAlpha> for f64 {
    fn from(a: CvarAlpha) -> f64 {
        a.0
    }
}

/// Slack subtracted before rounding `alpha * K` up, so products such as
/// `0.07 * 100 = 7.000000000000001` keep their intended tail size.
const TAIL_ROUNDING_SLACK: f64 = 1e-9;

/// Number of lowest costs averaged: `ceil(alpha * K)`, never below 1.
pub fn tail_count(alpha: CvarAlpha, k: usize) -> usize {
    let m = (alpha.0 * k as f64 - TAIL_ROUNDING_SLACK).ceil() as usize;
    m.clamp(1, k.max(1))
}

/// Mean of the lowest `ceil(alpha * K)` sampled costs.
pub fn cvar(sample: &[f64], alpha: CvarAlpha) -> Result<f64> {
    if sample.is_empty() {
        return invalid("CVaR of an empty sample");
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = tail_count(alpha, sorted.len());
    Ok(sorted[..m].iter().sum::<f64>() / m as f64)
}

/// Reusable shot-based CVaR objective for one (QUBO, ansatz, alpha, shots).
///
/// Precomputes the cost of every basis state and the cost-sorted order, so
/// each evaluation is one statevector build plus `shots` draws.
#[derive(Debug, Clone)]
pub struct CvarObjective {
    spec: AnsatzSpec,
    alpha: CvarAlpha,
    shots: usize,
    costs: Vec<f64>,
    by_cost: Vec<usize>,
}

impl CvarObjective {
    pub fn new(spec: AnsatzSpec, q: &QuboInstance, alpha: CvarAlpha, shots: usize) -> Result<Self> {
        spec.validate()?;
        if shots == 0 {
            return invalid("shots must be >= 1");
        }
        if q.dimension() != spec.n_qubits {
            return invalid(format!(
                "QUBO dimension {} != ansatz qubits {}",
                q.dimension(),
                spec.n_qubits
            ));
        }
        let costs = q.cost_table()?;
        Ok(Self::with_cost_table(spec, costs, alpha, shots))
    }

    /// Builds from an already computed cost table (indexed by basis index).
    pub fn with_cost_table(spec: AnsatzSpec, costs: Vec<f64>, alpha: CvarAlpha, shots: usize) -> Self {
        let mut by_cost: Vec<usize> = (0..costs.len()).collect();
        by_cost.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
        CvarObjective {
            spec,
            alpha,
            shots,
            costs,
            by_cost,
        }
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    /// One circuit evaluation: build, sample, CVaR.
    pub fn evaluate<R: Rng + ?Sized>(&self, params: &ParamVector, rng: &mut R) -> Result<f64> {
        let state = build_statevector(&self.spec, params)?;
        let counts = BasisSampler::new(&state).sample_counts(self.shots, rng);
        Ok(self.cvar_from_counts(&counts))
    }

    /// CVaR over a sample given as counts per basis index.
    pub fn cvar_from_counts(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let m = tail_count(self.alpha, total as usize) as u64;
        let mut taken = 0u64;
        let mut sum = 0.0;
        for &idx in &self.by_cost {
            if taken == m {
                break;
            }
            let take = counts[idx].min(m - taken);
            sum += take as f64 * self.costs[idx];
            taken += take;
        }
        sum / m as f64
    }
}

/// CVaR estimate of the ansatz output for `params` from `shots` samples.
pub fn cost_estimate<R: Rng + ?Sized>(
    spec: &AnsatzSpec,
    params: &ParamVector,
    q: &QuboInstance,
    alpha: CvarAlpha,
    shots: usize,
    rng: &mut R,
) -> Result<f64> {
    CvarObjective::new(*spec, q, alpha, shots)?.evaluate(params, rng)
}
