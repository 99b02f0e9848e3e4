//! Derivative-free minimization with strict evaluation accounting.
//!
//! [`Cobyla`] is Powell's linear-approximation trust-region method with the
//! constraint handling removed: a simplex of `k + 1` interpolation points
//! defines a linear model, each trust-region step moves a distance `rho`
//! down the model gradient, and `rho` shrinks from `rho_beg` to `rho_end`
//! whenever steps stop paying off on an acceptable simplex.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::ParamVector;
use crate::error::{invalid, Result};

// Simplex acceptability and step control constants from Powell's code.
const ALPHA: f64 = 0.25;
const BETA: f64 = 2.1;
const GAMMA: f64 = 0.5;
const DELTA: f64 = 1.1;
const SUCCESS_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Hard cap on objective evaluations.
    pub n_max: usize,
    /// Initial trust-region radius (radians).
    pub rho_beg: f64,
    /// Final trust-region radius; reaching it ends the run.
    pub rho_end: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            n_max: 1000,
            rho_beg: 1.0,
            rho_end: 1e-4,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.rho_end > 0.0 && self.rho_end < self.rho_beg && self.rho_beg.is_finite()) {
            return invalid(format!(
                "need 0 < rho_end < rho_beg, got rho_beg={}, rho_end={}",
                self.rho_beg, self.rho_end
            ));
        }
        if self.n_max < k + 2 {
            return invalid(format!(
                "n_max={} is below k+2={} for {k} parameters",
                self.n_max,
                k + 2
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub final_params: ParamVector,
    pub n_calls: usize,
    pub best_value: f64,
    /// `(call index, raw objective value)`, call indices starting at 1.
    pub history: Vec<(usize, f64)>,
}

/// A derivative-free minimizer over real parameter vectors.
pub trait Optimizer {
    fn minimize(
        &self,
        objective: &mut dyn FnMut(&[f64]) -> f64,
        initial: &ParamVector,
    ) -> Result<OptimizationResult>;
}

/// Unconstrained COBYLA.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cobyla {
    pub settings: OptimizerSettings,
}

impl Cobyla {
    pub fn new(settings: OptimizerSettings) -> Self {
        Cobyla { settings }
    }
}

impl Optimizer for Cobyla {
    fn minimize(
        &self,
        objective: &mut dyn FnMut(&[f64]) -> f64,
        initial: &ParamVector,
    ) -> Result<OptimizationResult> {
        self.settings.validate(initial.len())?;
        let mut budget = Budget::new(objective, self.settings.n_max);
        run_cobyla(&mut budget, initial.as_slice(), &self.settings);
        Ok(budget.finish())
    }
}

/// Minimizes `objective` from `initial` with the default COBYLA method.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    initial: &ParamVector,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    Cobyla::new(*settings).minimize(&mut objective, initial)
}

/// NaN and infinities rank as `+inf`.
fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Counts evaluations and remembers the best point.
struct Budget<'a> {
    objective: &'a mut dyn FnMut(&[f64]) -> f64,
    n_max: usize,
    history: Vec<(usize, f64)>,
    best: Option<(f64, Vec<f64>)>,
}

impl<'a> Budget<'a> {
    fn new(objective: &'a mut dyn FnMut(&[f64]) -> f64, n_max: usize) -> Self {
        Budget {
            objective,
            n_max,
            history: Vec::new(),
            best: None,
        }
    }

    /// `None` once the cap is reached.
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.history.len() >= self.n_max {
            return None;
        }
        let raw = (self.objective)(x);
        self.history.push((self.history.len() + 1, raw));
        let v = sanitize(raw);
        let improves = match &self.best {
            None => true,
            Some((b, _)) => v < *b,
        };
        if improves {
            self.best = Some((v, x.to_vec()));
        }
        Some(v)
    }

    fn finish(self) -> OptimizationResult {
        let (_, params) = self.best.expect("at least one evaluation");
        let best_value = self
            .history
            .iter()
            .map(|&(_, v)| v)
            .min_by(|a, b| sanitize(*a).total_cmp(&sanitize(*b)))
            .expect("non-empty history");
        OptimizationResult {
            final_params: ParamVector::new(params).expect("evaluated points are finite"),
            n_calls: self.history.len(),
            best_value,
            history: self.history,
        }
    }
}

/// Simplex: pivot `x0` plus `k` vertices stored as offsets from the pivot.
struct Simplex {
    x0: Vec<f64>,
    f0: f64,
    /// Row `j` is vertex `j` minus the pivot.
    offsets: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Inverse of the offset matrix; column `j` gives the barycentric
    /// weight of vertex `j` for a displacement.
    inverse: DMatrix<f64>,
}

impl Simplex {
    fn k(&self) -> usize {
        self.x0.len()
    }

    fn vertex(&self, j: usize) -> Vec<f64> {
        self.x0.iter().zip(&self.offsets[j]).map(|(a, b)| a + b).collect()
    }

    fn refresh_inverse(&mut self) -> bool {
        let k = self.k();
        let m = DMatrix::from_fn(k, k, |r, c| self.offsets[r][c]);
        match m.try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => {
                self.inverse = inv;
                true
            }
            _ => false,
        }
    }

    /// Makes the lowest-valued vertex the pivot.
    fn promote_best(&mut self) {
        let best = (0..self.k())
            .filter(|&j| self.values[j] < self.f0)
            .min_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let Some(j) = best else { return };
        let shift = self.offsets[j].clone();
        for (i, row) in self.offsets.iter_mut().enumerate() {
            if i == j {
                row.iter_mut().for_each(|v| *v = -*v);
            } else {
                row.iter_mut().zip(&shift).for_each(|(v, s)| *v -= s);
            }
        }
        self.x0.iter_mut().zip(&shift).for_each(|(x, s)| *x += s);
        std::mem::swap(&mut self.f0, &mut self.values[j]);
        self.refresh_inverse();
    }

    /// Linear-model gradient `g` solving `offsets * g = values - f0`.
    fn gradient(&self) -> Vec<f64> {
        let k = self.k();
        (0..k)
            .map(|i| (0..k).map(|j| self.inverse[(i, j)] * (self.values[j] - self.f0)).sum())
            .collect()
    }

    /// Barycentric weight of each vertex for displacement `d`.
    fn weights(&self, d: &[f64]) -> Vec<f64> {
        let k = self.k();
        (0..k)
            .map(|j| (0..k).map(|i| self.inverse[(i, j)] * d[i]).sum())
            .collect()
    }

    /// `vsig[j]`: distance of vertex `j` from the opposite face;
    /// `veta[j]`: distance of vertex `j` from the pivot.
    fn shape(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let vsig = (0..k)
            .map(|j| 1.0 / (0..k).map(|i| self.inverse[(i, j)].powi(2)).sum::<f64>().sqrt())
            .collect();
        let veta = self.offsets.iter().map(|r| norm(r)).collect();
        (vsig, veta)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the initial simplex `x0 + rho e_j`, re-centring on any vertex
/// that beats the current pivot. `None` when the budget runs out.
fn initial_simplex(budget: &mut Budget<'_>, x0: &[f64], rho: f64) -> Option<Simplex> {
    let k = x0.len();
    let mut x0 = x0.to_vec();
    let mut f0 = budget.eval(&x0)?;
    let mut offsets = vec![vec![0.0; k]; k];
    let mut values = vec![0.0; k];
    for j in 0..k {
        let mut x = x0.clone();
        x[j] += rho;
        let f = budget.eval(&x)?;
        offsets[j][j] = rho;
        values[j] = f;
        if f < f0 {
            // The new point becomes the pivot; earlier vertices keep their
            // absolute position, so their offsets shift by -rho along j.
            x0 = x;
            offsets[j][j] = -rho;
            values[j] = f0;
            f0 = f;
            for row in offsets.iter_mut().take(j) {
                row[j] -= rho;
            }
        }
    }
    let mut simplex = Simplex {
        x0,
        f0,
        offsets,
        values,
        inverse: DMatrix::zeros(k, k),
    };
    simplex.refresh_inverse();
    Some(simplex)
}

fn run_cobyla(budget: &mut Budget<'_>, initial: &[f64], settings: &OptimizerSettings) {
    let mut rho = settings.rho_beg;
    let Some(mut s) = initial_simplex(budget, initial, rho) else {
        return;
    };
    let k = s.k();
    // true right after a trust-region trial, mirroring Powell's IBRNCH
    let mut after_trial = false;

    loop {
        s.promote_best();
        let parsig = ALPHA * rho;
        let pareta = BETA * rho;

        // A singular or non-finite model cannot be used; rebuild around the
        // pivot at the current radius.
        if s.values.iter().any(|v| !v.is_finite()) || s.f0.is_infinite() {
            let Some(j) = (0..k).find(|&j| !s.values[j].is_finite()) else {
                // only the pivot is non-finite: promote_best would have moved it
                return;
            };
            s.offsets[j].iter_mut().for_each(|v| *v *= 0.5);
            let Some(f) = budget.eval(&s.vertex(j)) else { return };
            s.values[j] = f;
            if !s.refresh_inverse() {
                let Some(fresh) = initial_simplex(budget, &s.x0, rho) else { return };
                s = fresh;
            }
            after_trial = false;
            continue;
        }

        let (vsig, veta) = s.shape();
        let acceptable = vsig.iter().all(|&v| v >= parsig) && veta.iter().all(|&v| v <= pareta);

        if !after_trial && !acceptable {
            // Geometry step: replace the worst-placed vertex.
            let far = (0..k)
                .filter(|&j| veta[j] > pareta)
                .max_by(|&a, &b| veta[a].total_cmp(&veta[b]));
            let jdrop = far.or_else(|| {
                (0..k)
                    .filter(|&j| vsig[j] < parsig)
                    .min_by(|&a, &b| vsig[a].total_cmp(&vsig[b]))
            });
            let Some(jdrop) = jdrop else { unreachable!("unacceptable simplex has a bad vertex") };
            let scale = GAMMA * rho * vsig[jdrop];
            let mut dx: Vec<f64> = (0..k).map(|i| scale * s.inverse[(i, jdrop)]).collect();
            if dot(&s.gradient(), &dx) > 0.0 {
                dx.iter_mut().for_each(|v| *v = -*v);
            }
            s.offsets[jdrop] = dx;
            let Some(f) = budget.eval(&s.vertex(jdrop)) else { return };
            s.values[jdrop] = f;
            if !s.refresh_inverse() {
                let Some(fresh) = initial_simplex(budget, &s.x0, rho) else { return };
                s = fresh;
            }
            continue;
        }

        // Trust-region step: minimize the linear model on the ball of radius rho.
        let g = s.gradient();
        let gnorm = norm(&g);
        let mut improved = false;
        if gnorm.is_finite() && gnorm > 0.0 && rho * gnorm > 0.0 {
            let d: Vec<f64> = g.iter().map(|gi| -rho * gi / gnorm).collect();
            let trial: Vec<f64> = s.x0.iter().zip(&d).map(|(a, b)| a + b).collect();
            let Some(f) = budget.eval(&trial) else { return };
            after_trial = true;
            let predicted = rho * gnorm;
            let actual = s.f0 - f;

            // Choose the vertex the trial replaces.
            let weights = s.weights(&d);
            let mut ratio = if actual <= 0.0 { 1.0 } else { 0.0 };
            let mut jdrop = None;
            let mut sigbar = vec![0.0; k];
            for j in 0..k {
                let w = weights[j].abs();
                if w > ratio {
                    jdrop = Some(j);
                    ratio = w;
                }
                sigbar[j] = w * vsig[j];
            }
            let mut edgmax = DELTA * rho;
            let mut far = None;
            for j in 0..k {
                if sigbar[j] >= parsig || sigbar[j] >= vsig[j] {
                    let dist = if actual > 0.0 {
                        norm(&d.iter().zip(&s.offsets[j]).map(|(a, b)| a - b).collect::<Vec<_>>())
                    } else {
                        veta[j]
                    };
                    if dist > edgmax {
                        far = Some(j);
                        edgmax = dist;
                    }
                }
            }
            if far.is_some() {
                jdrop = far;
            }
            if let Some(j) = jdrop.filter(|_| f.is_finite()) {
                let old = std::mem::replace(&mut s.offsets[j], d);
                let old_value = std::mem::replace(&mut s.values[j], f);
                if !s.refresh_inverse() {
                    s.offsets[j] = old;
                    s.values[j] = old_value;
                    s.refresh_inverse();
                } else if actual > 0.0 && actual >= SUCCESS_RATIO * predicted {
                    improved = true;
                }
            }
        }
        if improved {
            continue;
        }

        // Unproductive step: fix the geometry first, otherwise shrink rho.
        if !acceptable {
            after_trial = false;
            continue;
        }
        if rho <= settings.rho_end {
            return;
        }
        rho *= 0.5;
        if rho <= 1.5 * settings.rho_end {
            rho = settings.rho_end;
        }
        after_trial = false;
    }
}
