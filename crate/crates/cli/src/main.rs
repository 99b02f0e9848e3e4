use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use vqabench::harness::{
    analyze, emit_quality_diagram_data, read_metrics_csv, read_records, run_experiment,
    write_quality_diagram_data, write_tables, Experiment, ExperimentConfig, RunOptions,
};
use vqabench::metrics::{select_estimates, SelectionMode, SelectionThresholds, DEFAULT_P_THRESHOLD};
use vqabench::{Error, Result};

#[derive(Parser)]
#[command(name = "vqabench", version, about = "Benchmark VQA configurations on QUBO instances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (alpha, shots, run) optimization of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "VQABENCH_WORKERS", default_value_t = 1)]
        workers: usize,
        /// Keep records already in --out and only run the missing ones.
        #[arg(long)]
        resume: bool,
        /// Overrides the config's master_seed.
        #[arg(long, env = "VQABENCH_MASTER_SEED")]
        master_seed: Option<u64>,
    },
    /// Compute metrics tables and the selected set from run records.
    Analyze {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_tables: PathBuf,
    },
    /// Re-apply thresholds to a metrics.csv.
    Select {
        #[arg(long)]
        metrics: PathBuf,
        /// f0,q0,r0
        #[arg(long, value_parser = parse_thresholds)]
        thresholds: SelectionThresholds,
        /// Compare lower interval endpoints instead of point estimates.
        #[arg(long)]
        strict: bool,
    },
    /// Emit quality-diagram scatter, bin counts and level curves for one config.
    PlotData {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config_id: String,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config to take p_threshold from.
        #[arg(long, conflicts_with = "p_threshold")]
        config: Option<PathBuf>,
        #[arg(long)]
        p_threshold: Option<f64>,
    },
    /// Print a built-in experiment config as JSON.
    Preset { name: Preset },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

fn parse_thresholds(s: &str) -> std::result::Result<SelectionThresholds, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [f0, q0, r0] = parts[..] else {
        return Err(format!("expected f0,q0,r0, got {} values", parts.len()));
    };
    SelectionThresholds::new(f0, q0, r0).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            workers,
            resume,
            master_seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = master_seed {
                cfg.master_seed = seed;
            }
            let exp = Experiment::prepare(cfg)?;
            let summary = run_experiment(&exp, &out, RunOptions { workers, resume })?;
            let errors = summary.records.iter().filter(|r| r.is_error()).count();
            println!(
                "{}",
                json!({
                    "records": summary.records_path,
                    "total": summary.records.len(),
                    "computed": summary.computed,
                    "reused": summary.reused,
                    "errors": errors,
                })
            );
        }
        Command::Analyze {
            records,
            config,
            out_tables,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = read_records(&records)?;
            let analysis = analyze(&records, &cfg)?;
            write_tables(&analysis, &out_tables)?;
            println!(
                "{}",
                json!({ "selected": analysis.selected, "failed": analysis.failed })
            );
        }
        Command::Select {
            metrics,
            thresholds,
            strict,
        } => {
            let mode = if strict {
                SelectionMode::Strict
            } else {
                SelectionMode::PointEstimate
            };
            let rows = read_metrics_csv(&metrics)?;
            let mut out = Vec::new();
            let mut selected = Vec::new();
            for row in &rows {
                let (f, q, r) = row.estimates();
                let verdict = select_estimates(f, q, r, &thresholds, mode);
                if verdict == vqabench::metrics::Verdict::Accepted {
                    selected.push((row.alpha, row.shots));
                }
                out.push(json!({
                    "config_id": row.config_id,
                    "alpha": row.alpha,
                    "shots": row.shots,
                    "verdict": verdict,
                }));
            }
            println!("{}", json!({ "rows": out, "selected": selected }));
        }
        Command::PlotData {
            records,
            config_id,
            out,
            config,
            p_threshold,
        } => {
            let p_threshold = match (config, p_threshold) {
                (Some(path), _) => ExperimentConfig::load(&path)?.p_threshold,
                (None, Some(p)) => p,
                (None, None) => DEFAULT_P_THRESHOLD,
            };
            let records = read_records(&records)?;
            let data = emit_quality_diagram_data(&records, &config_id, p_threshold)?;
            write_quality_diagram_data(&data, &out)?;
            println!(
                "{}",
                json!({ "config_id": data.config_id, "points": data.points.len(), "out": out })
            );
        }
        Command::Preset { name } => {
            let cfg = match name {
                Preset::Desk => ExperimentConfig::desk(),
                Preset::Full => ExperimentConfig::full_grid(),
            };
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(Error::from)?);
        }
    }
    Ok(())
}
