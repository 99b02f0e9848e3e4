//! RealAmplitudes statevector simulation.
//!
//! Basis index convention: `index = sum_i x_i * 2^i`, so qubit 0 is the
//! least significant bit of the index. Some frameworks print bitstrings
//! with qubit 0 on the right; here `BitString` stores qubit 0 first.
//!
//! Circuit layout for `reps = r` on `N` qubits (`k = N (r + 1)` angles):
//!
//! ```text
//! for l in 0..r:
//!     RY(theta[l*N + i]) on qubit i, i = 0..N-1
//!     CNOT(i -> i+1) for i = N-2, N-3, ..., 0      (reverse-linear)
//! RY(theta[r*N + i]) on qubit i, i = 0..N-1
//! ```

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qubo::{BitString, QuboInstance};

/// Largest register simulated densely.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub reps: usize,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, reps: usize) -> Result<Self> {
        let spec = AnsatzSpec { n_qubits, reps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return invalid(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {}",
                self.n_qubits
            ));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.n_qubits * (self.reps + 1)
    }
}

/// Rotation angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return invalid("parameter vector contains a non-finite angle");
        }
        Ok(ParamVector(angles))
    }

    pub fn zeros(k: usize) -> Self {
        ParamVector(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return invalid(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps explicit amplitudes; rejects lengths that are not `2^N` and
    /// states whose norm deviates from 1 by more than 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return invalid(format!("amplitude count {len} is not 2^N with N >= 1"));
        }
        let state = StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        if (state.norm_sqr() - 1.0).abs() > 1e-10 {
            return invalid(format!("state norm^2 {} is not 1", state.norm_sqr()));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, x: &BitString) -> Complex64 {
        self.amplitudes[x.to_index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn max_imaginary(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    /// `|amplitude|^2` by basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * c - x1 * s;
                *a1 = x0 * s + x1 * c;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        debug_assert_ne!(control, target);
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }
}

/// Prepares the RealAmplitudes state for `params` starting from `|0...0>`.
pub fn build_statevector(spec: &AnsatzSpec, params: &ParamVector) -> Result<StateVector> {
    spec.validate()?;
    let n = spec.n_qubits;
    if params.len() != spec.num_params() {
        return invalid(format!(
            "expected {} parameters for {n} qubits x {} reps, got {}",
            spec.num_params(),
            spec.reps,
            params.len()
        ));
    }
    let mut state = StateVector::zero_state(n)?;
    let theta = params.as_slice();
    for layer in 0..spec.reps {
        for q in 0..n {
            state.apply_ry(q, theta[layer * n + q]);
        }
        for i in (0..n.saturating_sub(1)).rev() {
            state.apply_cnot(i, i + 1);
        }
    }
    for q in 0..n {
        state.apply_ry(q, theta[spec.reps * n + q]);
    }
    debug_assert!(state.max_imaginary() < 1e-12);
    Ok(state)
}

/// Born-rule probability of every basis state with nonzero weight,
/// keyed by bitstring.
pub fn exact_probabilities(state: &StateVector) -> Vec<(BitString, f64)> {
    state
        .probabilities()
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > 0.0)
        .map(|(i, p)| (BitString::from_index(i, state.n_qubits), p))
        .collect()
}

/// Inverse-CDF sampler over basis indices.
#[derive(Debug, Clone)]
pub struct BasisSampler {
    cumulative: Vec<f64>,
}

impl BasisSampler {
    pub fn new(state: &StateVector) -> Self {
        let mut acc = 0.0;
        let cumulative = state
            .amplitudes
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        BasisSampler { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty state");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // u can round onto the top of the CDF; fall back to the last state
        // that actually carries weight.
        if idx < self.cumulative.len() {
            idx
        } else {
            self.cumulative.partition_point(|&c| c < total)
        }
    }

    /// Draws `shots` indices and returns counts per basis index.
    pub fn sample_counts<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.cumulative.len()];
        for _ in 0..shots {
            counts[self.sample(rng)] += 1;
        }
        counts
    }
}

/// Draws `shots` independent measurement outcomes.
pub fn sample_bitstrings<R: Rng + ?Sized>(
    state: &StateVector,
    shots: usize,
    rng: &mut R,
) -> Vec<BitString> {
    let sampler = BasisSampler::new(state);
    (0..shots)
        .map(|_| BitString::from_index(sampler.sample(rng), state.n_qubits))
        .collect()
}

/// Exact probability of measuring any cached global minimizer of `q`.
pub fn exact_p_min(state: &StateVector, q: &QuboInstance) -> Result<f64> {
    let min = q.minimum().ok_or_else(|| {
        Error::State("QUBO minimizers are not populated; run brute_force_minimum first".into())
    })?;
    if q.dimension() != state.n_qubits {
        return invalid(format!(
            "QUBO dimension {} != state qubits {}",
            q.dimension(),
            state.n_qubits
        ));
    }
    let p: f64 = min
        .minimizers
        .iter()
        .map(|m| state.amplitude(m).norm_sqr())
        .sum();
    Ok(p.clamp(0.0, 1.0))
}
