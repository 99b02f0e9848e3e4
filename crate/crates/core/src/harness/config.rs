use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{AnsatzSpec, ParamVector};
use crate::cost::CvarAlpha;
use crate::error::{at_path, invalid, Error, Result};
use crate::metrics::{required_sample_size, z_score, SelectionMode, SelectionThresholds};
use crate::optimizer::OptimizerSettings;
use crate::qubo::{random_qubo, QuboInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuboSource {
    /// JSON QUBO file; relative paths resolve against the config file.
    File { path: PathBuf },
    Random {
        dimension: usize,
        seed: u64,
        value_range: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialParams {
    Explicit(Vec<f64>),
    /// One draw, uniform in `[0, 2pi)`, shared by every run.
    Seed(u64),
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub qubo: QuboSource,
    pub ansatz: AnsatzSpec,
    pub alphas: Vec<CvarAlpha>,
    pub shots_grid: Vec<usize>,
    pub runs_per_config: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
    #[serde(default)]
    pub thresholds: SelectionThresholds,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub selection_mode: SelectionMode,
    pub master_seed: u64,
    pub initial_params: InitialParams,
    /// When set, `runs_per_config` must reach the worst-case sample size
    /// for this feasibility half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_half_width: Option<f64>,
}

fn default_p_threshold() -> f64 {
    crate::metrics::DEFAULT_P_THRESHOLD
}

fn default_confidence() -> f64 {
    crate::metrics::DEFAULT_CONFIDENCE
}

impl ExperimentConfig {
    /// Reads a JSON config; a relative QUBO file path is resolved against
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(at_path(path))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let QuboSource::File { path: qpath } = &mut cfg.qubo {
            if qpath.is_relative() {
                if let Some(dir) = path.parent() {
                    *qpath = dir.join(&*qpath);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ansatz.validate()?;
        let k = self.ansatz.num_params();
        if self.alphas.is_empty() || self.shots_grid.is_empty() {
            return invalid("alphas and shots_grid must be non-empty");
        }
        if self.shots_grid.contains(&0) {
            return invalid("shots must be >= 1");
        }
        if self.runs_per_config == 0 {
            return invalid("runs_per_config must be >= 1");
        }
        self.optimizer.validate(k)?;
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return invalid(format!("p_threshold must lie in (0, 1), got {}", self.p_threshold));
        }
        self.thresholds.validate()?;
        z_score(self.confidence)?;
        if let QuboSource::Random { dimension, .. } = self.qubo {
            if dimension != self.ansatz.n_qubits {
                return invalid(format!(
                    "QUBO dimension {dimension} != ansatz qubits {}",
                    self.ansatz.n_qubits
                ));
            }
        }
        if let InitialParams::Explicit(v) = &self.initial_params {
            if v.len() != k {
                return invalid(format!("initial_params has {} angles, ansatz needs {k}", v.len()));
            }
            ParamVector::new(v.clone())?;
        }
        if let Some(e) = self.target_half_width {
            let needed = required_sample_size(e, 0.5, self.confidence)?;
            if self.runs_per_config < needed {
                return invalid(format!(
                    "runs_per_config={} is below the {needed} runs needed for half-width {e}",
                    self.runs_per_config
                ));
            }
        }
        Ok(())
    }

    /// Loads or generates the QUBO instance (without its minimum).
    pub fn build_qubo(&self) -> Result<QuboInstance> {
        let q = match &self.qubo {
            QuboSource::File { path } => QuboInstance::load(path)?,
            QuboSource::Random {
                dimension,
                seed,
                value_range,
            } => random_qubo(*dimension, *seed, *value_range)?,
        };
        if q.dimension() != self.ansatz.n_qubits {
            return invalid(format!(
                "QUBO dimension {} != ansatz qubits {}",
                q.dimension(),
                self.ansatz.n_qubits
            ));
        }
        Ok(q)
    }

    pub fn initial_params(&self) -> Result<ParamVector> {
        match &self.initial_params {
            InitialParams::Explicit(v) => ParamVector::new(v.clone()),
            InitialParams::Seed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let two_pi = std::f64::consts::TAU;
                ParamVector::new(
                    (0..self.ansatz.num_params())
                        .map(|_| rng.random_range(0.0..two_pi))
                        .collect(),
                )
            }
        }
    }

    /// Grid cells in canonical order: alphas ascending, then shots ascending.
    pub fn config_ids(&self) -> Vec<ConfigId> {
        let mut ids: Vec<ConfigId> = self
            .alphas
            .iter()
            .flat_map(|&a| self.shots_grid.iter().map(move |&s| ConfigId::new(a, s)))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Desk-scale preset: 6 qubits, `alpha in {0.25, 1}`, `s in {100, 1000}`.
    pub fn desk() -> Self {
        ExperimentConfig {
            qubo: QuboSource::Random {
                dimension: 6,
                seed: 1,
                value_range: (-1.0, 1.0),
            },
            ansatz: AnsatzSpec { n_qubits: 6, reps: 1 },
            alphas: alphas(&[0.25, 1.0]),
            shots_grid: vec![100, 1000],
            runs_per_config: 100,
            optimizer: OptimizerSettings {
                n_max: 300,
                ..OptimizerSettings::default()
            },
            p_threshold: 0.5,
            thresholds: SelectionThresholds::BASELINE,
            confidence: 0.95,
            selection_mode: SelectionMode::PointEstimate,
            master_seed: 20240501,
            initial_params: InitialParams::Seed(3),
            target_half_width: None,
        }
    }

    /// The 16-qubit, 45-configuration, 400-run grid.
    pub fn full_grid() -> Self {
        ExperimentConfig {
            qubo: QuboSource::Random {
                dimension: 16,
                seed: 16,
                value_range: (-1.0, 1.0),
            },
            ansatz: AnsatzSpec { n_qubits: 16, reps: 1 },
            alphas: alphas(&[0.15, 0.25, 0.50, 0.75, 1.00]),
            shots_grid: vec![1000, 5000, 10000, 20000, 30000, 40000, 60000, 80000, 100000],
            runs_per_config: 400,
            optimizer: OptimizerSettings::default(),
            p_threshold: 0.5,
            thresholds: SelectionThresholds::BASELINE,
            confidence: 0.95,
            selection_mode: SelectionMode::PointEstimate,
            master_seed: 20240501,
            initial_params: InitialParams::Seed(7),
            target_half_width: Some(0.05),
        }
    }
}

fn alphas(v: &[f64]) -> Vec<CvarAlpha> {
    v.iter().map(|&a| CvarAlpha::new(a).expect("preset alpha")).collect()
}

/// One cell of the (alpha, shots) grid. Label form: `a0.25-s1000`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigId {
    pub alpha: CvarAlpha,
    pub shots: usize,
}

impl ConfigId {
    pub fn new(alpha: CvarAlpha, shots: usize) -> Self {
        ConfigId { alpha, shots }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed config id {label:?}, expected a<alpha>-s<shots>"));
        let rest = label.strip_prefix('a').ok_or_else(bad)?;
        let (a, s) = rest.split_once("-s").ok_or_else(bad)?;
        let alpha = CvarAlpha::new(a.parse().map_err(|_| bad())?)?;
        let shots = s.parse().map_err(|_| bad())?;
        Ok(ConfigId { alpha, shots })
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}-s{}", self.alpha.value(), self.shots)
    }
}

impl Eq for ConfigId {}

impl Ord for ConfigId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.alpha
            .value()
            .total_cmp(&other.alpha.value())
            .then(self.shots.cmp(&other.shots))
    }
}

impl PartialOrd for ConfigId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Per-run seed: 64-bit FNV-1a over `master_seed` (LE bytes), the config
/// label (UTF-8) and `run_index` (LE u64), finished with the SplitMix64
/// mixer so nearby inputs give unrelated seeds.
pub fn run_seed(master_seed: u64, config_id: &str, run_index: usize) -> u64 {
    let mut h = FNV_OFFSET;
    let bytes = master_seed
        .to_le_bytes()
        .into_iter()
        .chain(config_id.bytes())
        .chain((run_index as u64).to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
