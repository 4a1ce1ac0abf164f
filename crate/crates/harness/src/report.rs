use std::path::Path;

use aaa_core::federation::{AblationGrid, SiteEvaluation, TrainLogRow};
use aaa_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};

/// Label printed next to every average.
pub const AVERAGE_CONVENTION: &str = "unweighted mean of per-site accuracies";

/// Gap (in accuracy) an ablation ordering must exceed to be called significant.
pub const ORDERING_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub site_ids: Vec<u16>,
    pub sites: Vec<SiteEvaluation>,
    pub average: f64,
    pub average_convention: String,
}

impl MetricsReport {
    pub fn new(config: &ExperimentConfig, sites: Vec<SiteEvaluation>) -> Self {
        Self {
            mode: config.mode,
            config_fingerprint: config.fingerprint(),
            config: config.clone(),
            site_ids: sites.iter().map(|s| s.site_id).collect(),
            average: aaa_core::federation::average_accuracy(&sites),
            sites,
            average_convention: AVERAGE_CONVENTION.to_string(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        site_header(&self.site_ids)
    }

    pub fn row(&self) -> Vec<String> {
        self.sites
            .iter()
            .map(|s| fmt_acc(s.accuracy))
            .chain([fmt_acc(self.average)])
            .collect()
    }

    /// Human-readable table for stdout.
    pub fn table(&self) -> String {
        let header = self.header();
        let row = self.row();
        let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!(
            "{:<14}{}\n{:<14}{}\n(Average: {AVERAGE_CONVENTION})\n",
            "mode",
            line(&header),
            self.mode.as_str(),
            line(&row)
        )
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("report.csv"), &self.header(), &[self.row()])?;
        write_json(&dir.join("report.json"), self)
    }
}

fn site_header(site_ids: &[u16]) -> Vec<String> {
    site_ids
        .iter()
        .map(|id| format!("Site{id}"))
        .chain(["Average".to_string()])
        .collect()
}

pub fn fmt_acc(v: f64) -> String {
    format!("{v:.4}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

fn grid_header(site_ids: &[u16]) -> Vec<String> {
    ["Subset".to_string(), "MoE".to_string()]
        .into_iter()
        .chain(site_header(site_ids))
        .collect()
}

pub fn write_grid(path: &Path, grid: &AblationGrid) -> Result<()> {
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            [yes_no(c.subset), yes_no(c.moe)]
                .into_iter()
                .chain(c.per_site.iter().map(|s| fmt_acc(s.accuracy)))
                .chain([fmt_acc(c.average)])
                .collect()
        })
        .collect();
    write_csv(path, &grid_header(&grid.site_ids), &rows)
}

/// Mean and standard deviation of one ablation cell across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub subset: bool,
    pub moe: bool,
    /// Per-site means, then the average's mean.
    pub mean: Vec<f64>,
    /// Sample standard deviations in the same layout (0 for one seed).
    pub std: Vec<f64>,
    /// Seeds in which this cell had the highest average (ties count for all).
    pub top_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seeds: Vec<u64>,
    pub site_ids: Vec<u16>,
    pub cells: Vec<CellSummary>,
    /// Largest difference between two cells' mean averages.
    pub max_gap: f64,
    /// `"significant ordering"` or `"no significant ordering"`.
    pub ordering: String,
    pub average_convention: String,
    pub grids: Vec<AblationGrid>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summarizes per-seed grids. An ordering is significant when some pair of
/// cells differs in mean average by more than [`ORDERING_MARGIN`] and by
/// more than twice the standard error of the paired per-seed difference.
pub fn summarize(seeds: &[u64], grids: Vec<AblationGrid>) -> Result<AblationSummary> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Config("no ablation seeds".into()))?;
    let site_ids = first.site_ids.clone();
    if grids.iter().any(|g| g.site_ids != site_ids || g.cells.len() != first.cells.len()) {
        return Err(Error::DataIntegrity("ablation grids have different layouts".into()));
    }
    let averages: Vec<Vec<f64>> = (0..first.cells.len())
        .map(|c| grids.iter().map(|g| g.cells[c].average).collect())
        .collect();
    let cells = first
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let column = |k: usize| -> Vec<f64> {
                grids
                    .iter()
                    .map(|g| {
                        let c = &g.cells[ci];
                        c.per_site.get(k).map_or(c.average, |s| s.accuracy)
                    })
                    .collect()
            };
            let (mean, std): (Vec<f64>, Vec<f64>) = (0..=site_ids.len()).map(|k| mean_std(&column(k))).unzip();
            let top_count = (0..grids.len())
                .filter(|&g| averages.iter().all(|other| averages[ci][g] >= other[g]))
                .count();
            CellSummary {
                subset: cell.subset,
                moe: cell.moe,
                mean,
                std,
                top_count,
            }
        })
        .collect::<Vec<_>>();

    let mut max_gap: f64 = 0.0;
    let mut significant = false;
    for a in 0..averages.len() {
        for b in 0..averages.len() {
            if a == b {
                continue;
            }
            let diffs: Vec<f64> = averages[a].iter().zip(&averages[b]).map(|(x, y)| x - y).collect();
            let (gap, sd) = mean_std(&diffs);
            max_gap = max_gap.max(gap);
            let se = sd / (diffs.len() as f64).sqrt();
            if gap > ORDERING_MARGIN && gap > 2.0 * se {
                significant = true;
            }
        }
    }
    Ok(AblationSummary {
        seeds: seeds.to_vec(),
        site_ids,
        cells,
        max_gap,
        ordering: if significant { "significant ordering" } else { "no significant ordering" }.to_string(),
        average_convention: AVERAGE_CONVENTION.to_string(),
        grids,
    })
}

impl AblationSummary {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let header = grid_header(&self.site_ids);
        let rows = |pick: fn(&CellSummary) -> &Vec<f64>| -> Vec<Vec<String>> {
            self.cells
                .iter()
                .map(|c| {
                    [yes_no(c.subset), yes_no(c.moe)]
                        .into_iter()
                        .chain(pick(c).iter().map(|v| fmt_acc(*v)))
                        .collect()
                })
                .collect()
        };
        write_csv(&dir.join("ablation_mean.csv"), &header, &rows(|c| &c.mean))?;
        write_csv(&dir.join("ablation_std.csv"), &header, &rows(|c| &c.std))?;
        write_json(&dir.join("ablation.json"), self)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<8}{:<6}", "Subset", "MoE");
        for id in &self.site_ids {
            out += &format!("{:>16}", format!("Site{id}"));
        }
        out += &format!("{:>16}{:>6}\n", "Average", "top");
        for c in &self.cells {
            out += &format!("{:<8}{:<6}", yes_no(c.subset), yes_no(c.moe));
            for (m, s) in c.mean.iter().zip(&c.std) {
                out += &format!("{:>16}", format!("{m:.4} ± {s:.4}"));
            }
            out += &format!("{:>6}\n", format!("{}/{}", c.top_count, self.seeds.len()));
        }
        out += &format!(
            "{} (largest mean gap {:.4}; Average: {})\n",
            self.ordering, self.max_gap, self.average_convention
        );
        out
    }
}
