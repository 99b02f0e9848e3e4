use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ConfigId, ExperimentConfig};
use super::records::RunRecord;
use crate::error::{at_path, invalid, Error, Result};
use crate::metrics::{
    evaluate_distribution, occupancy, DiagramPoint, Estimate, MetricsReport, Verdict,
    VqaDistribution, GRID_BINS,
};

/// Level curves emitted alongside the scatter data.
pub const LEVEL_CURVE_QUALITIES: [f64; 3] = [1.0, 2.0, 4.0];
const LEVEL_CURVE_SAMPLES: usize = 51;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub alpha: f64,
    pub shots: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub reports: Vec<ConfigReport>,
    /// Configs without enough successful runs, with the reason.
    pub failed: Vec<(String, String)>,
    /// Accepted configs as `(alpha, shots)`, in canonical order.
    pub selected: Vec<(f64, usize)>,
}

/// Groups records by config and computes metrics and verdicts.
pub fn analyze(records: &[RunRecord], cfg: &ExperimentConfig) -> Result<Analysis> {
    let mut groups: BTreeMap<ConfigId, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(ConfigId::parse(&r.config_id)?).or_default().push(r);
    }
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for (id, rs) in groups {
        let errors = rs.iter().filter(|r| r.is_error()).count();
        let outcomes: Vec<_> = rs.iter().filter_map(|r| r.outcome).collect();
        if outcomes.len() < 2 {
            failed.push((
                id.label(),
                format!("{} successful runs ({errors} failed); need >= 2", outcomes.len()),
            ));
            continue;
        }
        let n_max = rs[0].n_max;
        if rs.iter().any(|r| r.n_max != n_max) {
            return invalid(format!("records for {id} disagree on n_max"));
        }
        let dist = VqaDistribution::new(id.label(), outcomes, n_max, cfg.p_threshold)?;
        let report = evaluate_distribution(&dist, cfg.confidence, &cfg.thresholds, cfg.selection_mode)?;
        reports.push(ConfigReport {
            alpha: id.alpha.value(),
            shots: id.shots,
            report,
        });
    }
    let selected = reports
        .iter()
        .filter(|r| r.report.verdict == Verdict::Accepted)
        .map(|r| (r.alpha, r.shots))
        .collect();
    Ok(Analysis {
        reports,
        failed,
        selected,
    })
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub shots: usize,
    pub alpha: f64,
    pub feasibility: f64,
    pub feasibility_err: f64,
    pub quality: f64,
    pub quality_err: f64,
    pub reproducibility: f64,
    pub reproducibility_err: f64,
    pub verdict: Verdict,
    pub n: usize,
    pub config_id: String,
}

impl From<&ConfigReport> for MetricsRow {
    fn from(c: &ConfigReport) -> Self {
        let r = &c.report;
        MetricsRow {
            shots: c.shots,
            alpha: c.alpha,
            feasibility: r.feasibility.value,
            feasibility_err: r.feasibility.half_width,
            quality: r.quality.value,
            quality_err: r.quality.half_width,
            reproducibility: r.reproducibility.value,
            reproducibility_err: r.reproducibility.half_width,
            verdict: r.verdict,
            n: r.n,
            config_id: r.config_id.clone(),
        }
    }
}

impl MetricsRow {
    pub fn estimates(&self) -> (Estimate, Estimate, Estimate) {
        let e = |value, half_width| Estimate { value, half_width };
        (
            e(self.feasibility, self.feasibility_err),
            e(self.quality, self.quality_err),
            e(self.reproducibility, self.reproducibility_err),
        )
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(at_path(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Writes `metrics.csv`, `metrics.json`, the three `s x alpha` tables
/// (`feasibility.csv`, `quality.csv`, `reproducibility.csv`) and
/// `selected.json`.
pub fn write_tables(analysis: &Analysis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv")).map_err(csv_err)?;
    for r in &analysis.reports {
        w.serialize(MetricsRow::from(r)).map_err(csv_err)?;
    }
    w.flush()?;

    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(analysis)?)?;

    let mut alphas: Vec<f64> = analysis.reports.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut shots: Vec<usize> = analysis.reports.iter().map(|r| r.shots).collect();
    shots.sort_unstable();
    shots.dedup();

    type Pick = fn(&MetricsReport) -> Estimate;
    let tables: [(&str, Pick); 3] = [
        ("feasibility.csv", |r| r.feasibility),
        ("quality.csv", |r| r.quality),
        ("reproducibility.csv", |r| r.reproducibility),
    ];
    for (name, pick) in tables {
        let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
        let mut header = vec!["s\\alpha".to_string()];
        header.extend(alphas.iter().map(|a| format!("{a:.2}")));
        w.write_record(&header).map_err(csv_err)?;
        for &s in &shots {
            let mut row = vec![s.to_string()];
            for &a in &alphas {
                let cell = analysis
                    .reports
                    .iter()
                    .find(|r| r.shots == s && r.alpha == a)
                    .map(|r| pick(&r.report).to_string())
                    .unwrap_or_default();
                row.push(cell);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }

    #[derive(Serialize)]
    struct Selected<'a> {
        selected: &'a [(f64, usize)],
        failed: &'a [(String, String)],
    }
    std::fs::write(
        dir.join("selected.json"),
        serde_json::to_string_pretty(&Selected {
            selected: &analysis.selected,
            failed: &analysis.failed,
        })?,
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCurve {
    pub q: f64,
    pub points: Vec<DiagramPoint>,
}

/// Plotting data for one configuration's quality diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramData {
    pub config_id: String,
    pub points: Vec<DiagramPoint>,
    /// `grid[iu][iv]` run counts on the 10 x 10 reproducibility grid.
    pub grid: [[usize; GRID_BINS]; GRID_BINS],
    pub level_curves: Vec<LevelCurve>,
}

/// Scatter points, occupancy grid and `q = 1, 2, 4` level curves.
///
/// `n_max` is taken from the records; the level curves depend on
/// `p_threshold`: `q` is constant on `u^2 + (v / (1 - p_threshold))^2 = 1/q^2`.
pub fn emit_quality_diagram_data(
    records: &[RunRecord],
    config_id: &str,
    p_threshold: f64,
) -> Result<DiagramData> {
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return invalid(format!("p_threshold must lie in (0, 1), got {p_threshold}"));
    }
    let rs: Vec<&RunRecord> = records.iter().filter(|r| r.config_id == config_id).collect();
    let Some(first) = rs.first() else {
        return invalid(format!("no records for config id {config_id:?}"));
    };
    let outcomes: Vec<_> = rs.iter().filter_map(|r| r.outcome).collect();
    let dist = VqaDistribution::new(config_id, outcomes, first.n_max, p_threshold)?;
    let points = dist.points();
    let grid = occupancy(&points);
    let w = 1.0 - p_threshold;
    let level_curves = LEVEL_CURVE_QUALITIES
        .iter()
        .map(|&q| {
            let radius = 1.0 / q;
            let points = (0..LEVEL_CURVE_SAMPLES)
                .map(|i| {
                    let u = radius * i as f64 / (LEVEL_CURVE_SAMPLES - 1) as f64;
                    DiagramPoint {
                        u,
                        v: w * (radius * radius - u * u).max(0.0).sqrt(),
                    }
                })
                .collect();
            LevelCurve { q, points }
        })
        .collect();
    Ok(DiagramData {
        config_id: config_id.to_string(),
        points,
        grid,
        level_curves,
    })
}

/// Writes `scatter.csv` (u,v), `bins.csv` (u_bin,v_bin,count) and
/// `level_curves.csv` (q,u,v) into `dir`.
pub fn write_quality_diagram_data(data: &DiagramData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("scatter.csv")).map_err(csv_err)?;
    w.write_record(["u", "v"]).map_err(csv_err)?;
    for p in &data.points {
        w.write_record([p.u.to_string(), p.v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("bins.csv")).map_err(csv_err)?;
    w.write_record(["u_bin", "v_bin", "u_lo", "v_lo", "count"]).map_err(csv_err)?;
    for (iu, col) in data.grid.iter().enumerate() {
        for (iv, count) in col.iter().enumerate() {
            let lo = |i: usize| format!("{:.1}", i as f64 / GRID_BINS as f64);
            w.write_record([iu.to_string(), iv.to_string(), lo(iu), lo(iv), count.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("level_curves.csv")).map_err(csv_err)?;
    w.write_record(["q", "u", "v"]).map_err(csv_err)?;
    for c in &data.level_curves {
        for p in &c.points {
            w.write_record([c.q.to_string(), p.u.to_string(), p.v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
