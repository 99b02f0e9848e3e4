//! QUBO instances, cost evaluation and the exhaustive global-minimum oracle.
//!
//! A QUBO instance is a dense symmetric matrix `Q`; the cost of a binary
//! vector `x` is `f(x) = x^T Q x`, summed over the full matrix so every
//! off-diagonal pair contributes twice.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{at_path, invalid, Error, Result};

/// Default upper bound on the dimension accepted by [`brute_force_minimum`].
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 24;

/// Largest tolerated `|Q[i][j] - Q[j][i]|` when loading a matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for deciding that a cost equals the minimum.
pub const COST_RELATIVE_TOLERANCE: f64 = 1e-9;

/// `|f - f_min| <= 1e-9 * max(1, |f_min|)`.
pub fn cost_matches_minimum(cost: f64, min_cost: f64) -> bool {
    (cost - min_cost).abs() <= COST_RELATIVE_TOLERANCE * min_cost.abs().max(1.0)
}

/// An assignment of the `N` binary variables.
///
/// Bit `i` is QUBO variable `x_i` and qubit `i`. The associated basis index
/// is `sum_i x_i * 2^i`, i.e. qubit 0 is the least significant bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return invalid(format!("bit value {b} is not 0 or 1"));
        }
        Ok(BitString(bits))
    }

    pub fn zeros(len: usize) -> Self {
        BitString(vec![0; len])
    }

    pub fn ones(len: usize) -> Self {
        BitString(vec![1; len])
    }

    /// Decodes `index` into `len` bits, least significant bit first.
    pub fn from_index(index: usize, len: usize) -> Self {
        BitString((0..len).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for BitString {
    type Error = Error;

    fn try_from(bits: Vec<u8>) -> Result<Self> {
        BitString::new(bits)
    }
}

impl From<BitString> for Vec<u8> {
    fn from(b: BitString) -> Self {
        b.0
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Global-minimum data attached to an instance by [`brute_force_minimum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMinimum {
    pub min_cost: f64,
    /// Every minimizer, ordered by basis index.
    pub minimizers: Vec<BitString>,
}

impl GlobalMinimum {
    pub fn minimizer_indices(&self) -> Vec<usize> {
        self.minimizers.iter().map(BitString::to_index).collect()
    }
}

/// A dense symmetric QUBO matrix plus optional cached minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboInstance {
    dimension: usize,
    /// Row-major `dimension x dimension`.
    matrix: Vec<f64>,
    seed: Option<u64>,
    value_range: Option<(f64, f64)>,
    minimum: Option<GlobalMinimum>,
}

impl QuboInstance {
    /// Builds an instance from a square matrix given as rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return invalid("QUBO matrix must have dimension >= 1");
        }
        let mut matrix = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return invalid(format!("row {i} has length {} but dimension is {n}", row.len()));
            }
            matrix.extend(row);
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite()) {
            return invalid(format!("matrix entry {v} is not finite"));
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((matrix[i * n + j] - matrix[j * n + i]).abs());
            }
        }
        if worst > SYMMETRY_TOLERANCE {
            return invalid(format!(
                "matrix is not symmetric (max |Q[i][j] - Q[j][i]| = {worst:e})"
            ));
        }
        Ok(QuboInstance {
            dimension: n,
            matrix,
            seed: None,
            value_range: None,
            minimum: None,
        })
    }

    pub fn zeros(dimension: usize) -> Result<Self> {
        Self::from_rows(vec![vec![0.0; dimension]; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dimension + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .chunks(self.dimension)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.value_range
    }

    pub fn minimum(&self) -> Option<&GlobalMinimum> {
        self.minimum.as_ref()
    }

    /// Runs the exhaustive oracle (default limit) and caches its result.
    pub fn with_minimum(mut self) -> Result<Self> {
        let min = brute_force_minimum(&self, DEFAULT_EXHAUSTIVE_LIMIT)?;
        self.minimum = Some(min);
        Ok(self)
    }

    /// Cost of the basis state `index`, summing only over the support of `x`.
    ///
    /// Equal to [`evaluate`] up to floating-point reassociation.
    pub fn cost_of_index(&self, index: usize) -> f64 {
        let n = self.dimension;
        let mut total = 0.0;
        let mut rest = index;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let row = &self.matrix[i * n..(i + 1) * n];
            total += row[i];
            let mut lower = index & ((1usize << i) - 1);
            while lower != 0 {
                let j = lower.trailing_zeros() as usize;
                lower &= lower - 1;
                total += 2.0 * row[j];
            }
        }
        total
    }

    /// Cost of every basis state, indexed by basis index.
    pub fn cost_table(&self) -> Result<Vec<f64>> {
        if self.dimension > DEFAULT_EXHAUSTIVE_LIMIT {
            return Err(Error::Capability(format!(
                "cost table for dimension {} exceeds limit {DEFAULT_EXHAUSTIVE_LIMIT}",
                self.dimension
            )));
        }
        Ok((0..1usize << self.dimension)
            .into_par_iter()
            .map(|x| self.cost_of_index(x))
            .collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(at_path(path))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: QuboFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&QuboFile::from(self))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(at_path(path))?;
        Ok(())
    }
}

/// On-disk QUBO representation: the full dense symmetric matrix.
#[derive(Debug, Serialize, Deserialize)]
struct QuboFile {
    dimension: usize,
    matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_range: Option<(f64, f64)>,
}

impl TryFrom<QuboFile> for QuboInstance {
    type Error = Error;

    fn try_from(file: QuboFile) -> Result<Self> {
        if file.matrix.len() != file.dimension {
            return invalid(format!(
                "dimension {} does not match {} matrix rows",
                file.dimension,
                file.matrix.len()
            ));
        }
        let mut q = QuboInstance::from_rows(file.matrix)?;
        q.seed = file.seed;
        q.value_range = file.value_range;
        Ok(q)
    }
}

impl From<&QuboInstance> for QuboFile {
    fn from(q: &QuboInstance) -> Self {
        QuboFile {
            dimension: q.dimension,
            matrix: q.rows(),
            seed: q.seed,
            value_range: q.value_range,
        }
    }
}

/// `f(x) = sum_{i,j} x_i Q[i][j] x_j` over the full matrix.
pub fn evaluate(q: &QuboInstance, x: &BitString) -> Result<f64> {
    let n = q.dimension;
    if x.len() != n {
        return invalid(format!("bitstring length {} != QUBO dimension {n}", x.len()));
    }
    let bits = x.bits();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += f64::from(bits[i]) * q.get(i, j) * f64::from(bits[j]);
        }
    }
    Ok(total)
}

/// Enumerates all `2^N` assignments and returns the minimum with every
/// minimizer (within [`cost_matches_minimum`]).
pub fn brute_force_minimum(q: &QuboInstance, limit: usize) -> Result<GlobalMinimum> {
    let n = q.dimension;
    if n > limit {
        return Err(Error::Capability(format!(
            "exhaustive search over dimension {n} exceeds limit {limit}"
        )));
    }
    let space = 0..1usize << n;
    let min_cost = space
        .clone()
        .into_par_iter()
        .map(|x| q.cost_of_index(x))
        .reduce(|| f64::INFINITY, f64::min);
    let minimizers = space
        .into_par_iter()
        .filter(|&x| cost_matches_minimum(q.cost_of_index(x), min_cost))
        .map(|x| BitString::from_index(x, n))
        .collect();
    Ok(GlobalMinimum {
        min_cost,
        minimizers,
    })
}

/// Seeded random symmetric instance with upper-triangle entries drawn
/// uniformly from `[lo, hi]` in row-major order.
pub fn random_qubo(dimension: usize, seed: u64, value_range: (f64, f64)) -> Result<QuboInstance> {
    let (lo, hi) = value_range;
    if dimension == 0 {
        return invalid("dimension must be >= 1");
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return invalid(format!("value range ({lo}, {hi}) must satisfy lo < hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dimension;
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(lo..=hi);
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    Ok(QuboInstance {
        dimension: n,
        matrix,
        seed: Some(seed),
        value_range: Some(value_range),
        minimum: None,
    })
}
