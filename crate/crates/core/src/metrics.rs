//! Quality diagram, feasibility / quality / reproducibility estimators with
//! normal-approximation confidence intervals, and the threshold cascade.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Grid resolution per axis of the quality diagram (`K = 10 * 10`).
pub const GRID_BINS: usize = 10;
/// Radius below which the quality function saturates.
pub const R_FLOOR: f64 = 1e-9;
/// Quality assigned to outcomes within `R_FLOOR` of the ideal point.
pub const Q_CAP: f64 = 1e9;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_P_THRESHOLD: f64 = 0.5;

/// Two-sided standard normal quantile `z` with `P(|Z| <= z) = confidence`.
pub fn z_score(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence must lie in (0, 1), got {confidence}"));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// One optimization run as a point of the quality diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub n_calls: usize,
    pub p_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    /// Normalized circuit evaluations.
    pub u: f64,
    /// `1 - p_min`.
    pub v: f64,
}

/// `(n_calls, p_min) -> ((n_calls - 1)/(n_max - 1), 1 - p_min)`.
pub fn normalize(outcome: RunOutcome, n_max: usize) -> Result<DiagramPoint> {
    if n_max < 2 {
        return invalid(format!("n_max must be >= 2, got {n_max}"));
    }
    if outcome.n_calls == 0 || outcome.n_calls > n_max {
        return invalid(format!(
            "n_calls {} outside 1..={n_max}",
            outcome.n_calls
        ));
    }
    if !(0.0..=1.0).contains(&outcome.p_min) {
        return invalid(format!("p_min {} outside [0, 1]", outcome.p_min));
    }
    Ok(DiagramPoint {
        u: (outcome.n_calls - 1) as f64 / (n_max - 1) as f64,
        v: 1.0 - outcome.p_min,
    })
}

/// Heaviside-gated inverse weighted distance to the ideal point.
///
/// Feasible outcomes (`p_min >= p_threshold`) score
/// `1 / sqrt(u^2 + ((1 - p_min)/(1 - p_threshold))^2)`; all others score 0.
pub fn quality_function(outcome: RunOutcome, n_max: usize, p_threshold: f64) -> f64 {
    if outcome.p_min < p_threshold {
        return 0.0;
    }
    let u = (outcome.n_calls as f64 - 1.0) / (n_max as f64 - 1.0);
    let w = (1.0 - outcome.p_min) / (1.0 - p_threshold);
    let r = u.hypot(w);
    if r < R_FLOOR {
        Q_CAP
    } else {
        1.0 / r
    }
}

/// An ensemble of run outcomes for one VQA configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaDistribution {
    pub config_id: String,
    pub outcomes: Vec<RunOutcome>,
    pub n_max: usize,
    pub p_threshold: f64,
}

impl VqaDistribution {
    pub fn new(
        config_id: impl Into<String>,
        outcomes: Vec<RunOutcome>,
        n_max: usize,
        p_threshold: f64,
    ) -> Result<Self> {
        if !(p_threshold > 0.0 && p_threshold < 1.0) {
            return invalid(format!("p_threshold must lie in (0, 1), got {p_threshold}"));
        }
        if n_max < 2 {
            return invalid(format!("n_max must be >= 2, got {n_max}"));
        }
        for o in &outcomes {
            normalize(*o, n_max)?;
        }
        Ok(VqaDistribution {
            config_id: config_id.into(),
            outcomes,
            n_max,
            p_threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn points(&self) -> Vec<DiagramPoint> {
        self.outcomes
            .iter()
            .map(|o| normalize(*o, self.n_max).expect("validated on construction"))
            .collect()
    }
}

/// Point estimate with the half-width of its confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.value, self.half_width)
    }
}

/// Share of runs with `p_min >= p_threshold`, with a Wald interval.
pub fn feasibility(dist: &VqaDistribution, confidence: f64) -> Result<Estimate> {
    if dist.is_empty() {
        return invalid("feasibility of an empty distribution");
    }
    let z = z_score(confidence)?;
    let n = dist.len() as f64;
    let hits = dist
        .outcomes
        .iter()
        .filter(|o| o.p_min >= dist.p_threshold)
        .count() as f64;
    let p = hits / n;
    Ok(Estimate {
        value: p,
        half_width: z * (p * (1.0 - p) / n).sqrt(),
    })
}

/// Runs needed for a Wald half-width `half_width` at proportion `p`:
/// `ceil(z^2 p (1 - p) / E^2)`.
pub fn required_sample_size(half_width: f64, p: f64, confidence: f64) -> Result<usize> {
    if !(half_width > 0.0 && half_width < 1.0) {
        return invalid(format!("half-width must lie in (0, 1), got {half_width}"));
    }
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("proportion must lie in [0, 1], got {p}"));
    }
    let z = z_score(confidence)?;
    Ok((z * z * p * (1.0 - p) / (half_width * half_width)).ceil() as usize)
}

/// Mean quality over runs; half-width `z * s / sqrt(n)` with the
/// `(n - 1)`-denominator sample deviation.
pub fn quality(dist: &VqaDistribution, confidence: f64) -> Result<Estimate> {
    if dist.len() < 2 {
        return invalid(format!("quality needs n >= 2 outcomes, got {}", dist.len()));
    }
    let z = z_score(confidence)?;
    let q: Vec<f64> = dist
        .outcomes
        .iter()
        .map(|o| quality_function(*o, dist.n_max, dist.p_threshold))
        .collect();
    let n = q.len() as f64;
    let mean = q.iter().sum::<f64>() / n;
    let var = q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        value: mean,
        half_width: z * var.sqrt() / n.sqrt(),
    })
}

/// Grid cell of a diagram point; intervals are `[l, l + 0.1)` except the
/// last, which is closed at 1.
pub fn bin_of(point: DiagramPoint) -> (usize, usize) {
    let cell = |x: f64| ((x * GRID_BINS as f64).floor().max(0.0) as usize).min(GRID_BINS - 1);
    (cell(point.u), cell(point.v))
}

/// Occupancy counts, `grid[iu][iv]`.
pub fn occupancy(points: &[DiagramPoint]) -> [[usize; GRID_BINS]; GRID_BINS] {
    let mut grid = [[0usize; GRID_BINS]; GRID_BINS];
    for p in points {
        let (iu, iv) = bin_of(*p);
        grid[iu][iv] += 1;
    }
    grid
}

/// `1 - S / ln K` for the binned Shannon entropy `S` (natural log), with a
/// delta-method half-width.
pub fn reproducibility(dist: &VqaDistribution, confidence: f64) -> Result<Estimate> {
    if dist.len() < 2 {
        return invalid(format!(
            "reproducibility needs n >= 2 outcomes, got {}",
            dist.len()
        ));
    }
    let z = z_score(confidence)?;
    let grid = occupancy(&dist.points());
    Ok(entropy_estimate(grid.iter().flatten().copied(), dist.len(), z))
}

fn entropy_estimate(counts: impl Iterator<Item = usize>, n: usize, z: f64) -> Estimate {
    let ln_k = ((GRID_BINS * GRID_BINS) as f64).ln();
    let n_f = n as f64;
    let (mut plnp, mut pln2p) = (0.0, 0.0);
    for c in counts.filter(|&c| c > 0) {
        let p = c as f64 / n_f;
        let l = p.ln();
        plnp += p * l;
        pln2p += p * l * l;
    }
    let var = ((pln2p - plnp * plnp) / n_f).max(0.0);
    Estimate {
        value: 1.0 + plnp / ln_k,
        half_width: z * var.sqrt() / ln_k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionThresholds {
    pub f0: f64,
    pub q0: f64,
    pub r0: f64,
}

impl SelectionThresholds {
    /// `(0.70, 1.20, 0.60)`.
    pub const BASELINE: SelectionThresholds = SelectionThresholds {
        f0: 0.70,
        q0: 1.20,
        r0: 0.60,
    };

    pub fn new(f0: f64, q0: f64, r0: f64) -> Result<Self> {
        let t = SelectionThresholds { f0, q0, r0 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f0) || !(0.0..=1.0).contains(&self.r0) || self.q0.is_nan() || self.q0 < 0.0 {
            return invalid(format!(
                "thresholds need f0, r0 in [0, 1] and q0 >= 0, got ({}, {}, {})",
                self.f0, self.q0, self.r0
            ));
        }
        Ok(())
    }
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self::BASELINE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    RejectedFeasibility,
    RejectedQuality,
    RejectedReproducibility,
    Accepted,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::RejectedFeasibility => "rejected_feasibility",
            Verdict::RejectedQuality => "rejected_quality",
            Verdict::RejectedReproducibility => "rejected_reproducibility",
            Verdict::Accepted => "accepted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rejected_feasibility" => Ok(Verdict::RejectedFeasibility),
            "rejected_quality" => Ok(Verdict::RejectedQuality),
            "rejected_reproducibility" => Ok(Verdict::RejectedReproducibility),
            "accepted" => Ok(Verdict::Accepted),
            other => invalid(format!("unknown verdict {other:?}")),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What is compared against each threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Central values.
    #[default]
    PointEstimate,
    /// Lower interval endpoints, `value - half_width`.
    Strict,
}

/// Three-gate cascade on point estimates: feasibility, then quality, then
/// reproducibility.
pub fn select(feasibility: f64, quality: f64, reproducibility: f64, t: &SelectionThresholds) -> Verdict {
    if feasibility < t.f0 {
        Verdict::RejectedFeasibility
    } else if quality < t.q0 {
        Verdict::RejectedQuality
    } else if reproducibility < t.r0 {
        Verdict::RejectedReproducibility
    } else {
        Verdict::Accepted
    }
}

/// Cascade over estimates in the given mode.
pub fn select_estimates(
    f: Estimate,
    q: Estimate,
    r: Estimate,
    t: &SelectionThresholds,
    mode: SelectionMode,
) -> Verdict {
    match mode {
        SelectionMode::PointEstimate => select(f.value, q.value, r.value, t),
        SelectionMode::Strict => select(
            f.value - f.half_width,
            q.value - q.half_width,
            r.value - r.half_width,
            t,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_id: String,
    pub n: usize,
    pub feasibility: Estimate,
    pub quality: Estimate,
    pub reproducibility: Estimate,
    pub confidence_level: f64,
    pub verdict: Verdict,
}

/// All three metrics and the verdict for one distribution.
pub fn evaluate_distribution(
    dist: &VqaDistribution,
    confidence: f64,
    thresholds: &SelectionThresholds,
    mode: SelectionMode,
) -> Result<MetricsReport> {
    let feasibility = feasibility(dist, confidence)?;
    let quality = quality(dist, confidence)?;
    let reproducibility = reproducibility(dist, confidence)?;
    Ok(MetricsReport {
        config_id: dist.config_id.clone(),
        n: dist.len(),
        verdict: select_estimates(feasibility, quality, reproducibility, thresholds, mode),
        feasibility,
        quality,
        reproducibility,
        confidence_level: confidence,
    })
}
