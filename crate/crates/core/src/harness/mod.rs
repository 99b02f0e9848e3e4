//! Experiment orchestration over the (alpha, shots) grid.
//!
//! Output directory layout written by [`run_experiment`]:
//!
//! - `records.jsonl`: canonical run records, sorted by (config, run index)
//! - `records.partial.jsonl`: append-only log written while runs complete;
//!   removed once the canonical file is in place
//! - `timings.jsonl`: wall-clock seconds per computed run (not used by metrics)

mod analysis;
mod config;
mod records;

pub use analysis::{
    analyze, emit_quality_diagram_data, read_metrics_csv, write_quality_diagram_data, write_tables,
    Analysis, ConfigReport, DiagramData, LevelCurve, MetricsRow,
};
pub use config::{run_seed, ConfigId, ExperimentConfig, InitialParams, QuboSource};
pub use records::{read_records, write_records, RunRecord, TimingLine};

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{build_statevector, exact_p_min, AnsatzSpec, ParamVector};
use crate::cost::{CvarAlpha, CvarObjective};
use crate::error::{at_path, Error, Result};
use crate::metrics::RunOutcome;
use crate::optimizer::minimize;
use crate::qubo::QuboInstance;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const PARTIAL_RECORDS_FILE: &str = "records.partial.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

/// A validated config with its shared immutable inputs resolved: the QUBO
/// (minimizers precomputed once), its cost table, and the initial angles.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub qubo: QuboInstance,
    pub initial: ParamVector,
    costs: Vec<f64>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let qubo = config.build_qubo()?.with_minimum()?;
        let costs = qubo.cost_table()?;
        let initial = config.initial_params()?;
        Ok(Experiment {
            config,
            qubo,
            initial,
            costs,
        })
    }

    pub fn spec(&self) -> AnsatzSpec {
        self.config.ansatz
    }

    fn objective(&self, alpha: CvarAlpha, shots: usize) -> CvarObjective {
        CvarObjective::with_cost_table(self.spec(), self.costs.clone(), alpha, shots)
    }
}

/// Runs one seeded optimization and scores its output circuit.
pub fn run_single(exp: &Experiment, alpha: CvarAlpha, shots: usize, run_index: usize) -> RunRecord {
    let objective = exp.objective(alpha, shots);
    run_with_objective(exp, &objective, ConfigId::new(alpha, shots), run_index)
}

fn run_with_objective(
    exp: &Experiment,
    objective: &CvarObjective,
    id: ConfigId,
    run_index: usize,
) -> RunRecord {
    let label = id.label();
    let seed = run_seed(exp.config.master_seed, &label, run_index);
    let start = Instant::now();
    let mut record = RunRecord {
        config_id: label,
        alpha: id.alpha.value(),
        shots: id.shots,
        run_index,
        seed,
        n_max: exp.config.optimizer.n_max,
        outcome: None,
        best_cost: None,
        error: None,
        wall_time: 0.0,
    };
    match optimize_once(exp, objective, seed) {
        Ok((outcome, best)) => {
            record.outcome = Some(outcome);
            record.best_cost = Some(best);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.wall_time = start.elapsed().as_secs_f64();
    record
}

fn optimize_once(exp: &Experiment, objective: &CvarObjective, seed: u64) -> Result<(RunOutcome, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failure = None;
    let result = minimize(
        |theta: &[f64]| {
            let params = match ParamVector::new(theta.to_vec()) {
                Ok(p) => p,
                Err(e) => {
                    failure.get_or_insert(e);
                    return f64::NAN;
                }
            };
            objective.evaluate(&params, &mut rng).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        },
        &exp.initial,
        &exp.config.optimizer,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let state = build_statevector(&exp.spec(), &result.final_params)?;
    let p_min = exact_p_min(&state, &exp.qubo)?;
    Ok((
        RunOutcome {
            n_calls: result.n_calls,
            p_min,
        },
        result.best_value,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            resume: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    /// Canonically ordered records, as written to `records.jsonl`.
    pub records: Vec<RunRecord>,
    pub computed: usize,
    pub reused: usize,
    pub records_path: PathBuf,
}

struct Sink {
    records: BufWriter<File>,
    timings: BufWriter<File>,
}

impl Sink {
    fn append(&mut self, r: &RunRecord) -> Result<()> {
        serde_json::to_writer(&mut self.records, r)?;
        self.records.write_all(b"\n")?;
        self.records.flush()?;
        let t = TimingLine {
            config_id: r.config_id.clone(),
            run_index: r.run_index,
            wall_time: r.wall_time,
        };
        serde_json::to_writer(&mut self.timings, &t)?;
        self.timings.write_all(b"\n")?;
        self.timings.flush()?;
        Ok(())
    }
}

fn open_append(path: &Path, truncate: bool) -> Result<BufWriter<File>> {
    let mut opts = OpenOptions::new();
    opts.create(true);
    if truncate {
        opts.write(true).truncate(true);
    } else {
        opts.append(true);
    }
    opts.open(path).map(BufWriter::new).map_err(at_path(path))
}

/// Runs every (alpha, shots, run index) task on a pool of `workers`
/// threads and writes the canonical record file.
///
/// With `resume`, records already present in `out_dir` (canonical or
/// partial) are kept and only missing tasks run.
pub fn run_experiment(exp: &Experiment, out_dir: &Path, opts: RunOptions) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(out_dir).map_err(at_path(out_dir))?;
    let final_path = out_dir.join(RECORDS_FILE);
    let partial_path = out_dir.join(PARTIAL_RECORDS_FILE);

    let ids = exp.config.config_ids();
    let wanted: HashSet<(String, usize)> = ids
        .iter()
        .flat_map(|id| (0..exp.config.runs_per_config).map(move |i| (id.label(), i)))
        .collect();

    let mut done: BTreeMap<(String, usize), RunRecord> = BTreeMap::new();
    if opts.resume {
        for path in [&final_path, &partial_path] {
            if path.exists() {
                for r in read_records(path)? {
                    if wanted.contains(&r.key()) && !r.is_error() {
                        done.insert(r.key(), r);
                    }
                }
            }
        }
    }
    let reused = done.len();

    let sink = Mutex::new(Sink {
        records: open_append(&partial_path, !opts.resume)?,
        timings: open_append(&out_dir.join(TIMINGS_FILE), !opts.resume)?,
    });
    // the resumed set must survive another interruption, so it goes into
    // the fresh partial log before new work starts
    if opts.resume {
        let mut s = sink.lock().expect("sink lock");
        s.records = open_append(&partial_path, true)?;
        for r in done.values() {
            serde_json::to_writer(&mut s.records, r)?;
            s.records.write_all(b"\n")?;
        }
        s.records.flush()?;
    }

    let tasks: Vec<(ConfigId, usize)> = ids
        .iter()
        .flat_map(|&id| (0..exp.config.runs_per_config).map(move |i| (id, i)))
        .filter(|(id, i)| !done.contains_key(&(id.label(), *i)))
        .collect();
    let objectives: BTreeMap<String, CvarObjective> = ids
        .iter()
        .map(|id| (id.label(), exp.objective(id.alpha, id.shots)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let fresh: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(id, i)| {
                let r = run_with_objective(exp, &objectives[&id.label()], id, i);
                sink.lock().expect("sink lock").append(&r)?;
                Ok(r)
            })
            .collect::<Result<_>>()
    })?;
    let computed = fresh.len();

    let mut all: Vec<RunRecord> = done.into_values().chain(fresh).collect();
    all.sort_by(|a, b| {
        let ka = ConfigId::parse(&a.config_id).expect("own label");
        let kb = ConfigId::parse(&b.config_id).expect("own label");
        ka.cmp(&kb).then(a.run_index.cmp(&b.run_index))
    });
    write_records(&final_path, &all)?;
    drop(sink);
    std::fs::remove_file(&partial_path)?;

    Ok(ExperimentSummary {
        records: all,
        computed,
        reused,
        records_path: final_path,
    })
}
