//! Report assembly: per-sequence rows, aggregation into per-configuration
//! means, and CSV/JSON emission.
//!
//! Undefined PP-k entries are excluded from means (and counted) rather
//! than imputed; a cell renders as `-` only when no sequence defined it.
//! Means use compensated (Neumaier) summation so aggregating m identical
//! values returns exactly that value.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::ClientStats;
use crate::metrics::SequenceMetrics;
use crate::rerank::RerankTelemetry;

use super::HarnessError;

/// Metrics and telemetry for one (ranker, harm fraction, sequence) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub config_id: String,
    pub harm_pct: u32,
    pub sequence_index: usize,
    pub n: usize,
    pub metrics: SequenceMetrics,
    pub telemetry: RerankTelemetry,
}

/// Mean of the defined values plus how many sequences contributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mean: Option<f64>,
    pub contributing: usize,
}

/// Per-(ranker, harm fraction) aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub config_id: String,
    pub harm_pct: u32,
    pub n_sequences: usize,
    pub tp: BTreeMap<usize, AggregateCell>,
    pub pp: BTreeMap<usize, AggregateCell>,
    pub ewn: AggregateCell,
    pub ewn_degenerate_count: usize,
    pub telemetry: RerankTelemetry,
}

/// Echo of the experiment parameters that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub harm_fractions: Vec<f64>,
    pub k_tp: Vec<usize>,
    pub k_pp: Vec<usize>,
    pub rankers: Vec<String>,
}

/// Full experiment output: aggregates for tables, per-sequence rows for
/// audits, and client counters when a remote backend was involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: RunSummary,
    pub aggregates: Vec<AggregateRow>,
    pub sequences: Vec<SequenceRow>,
    pub client_stats: Option<ClientStats>,
}

/// Compensated summation; exact for the well-conditioned sums that arise
/// from averaging bounded metric values.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for value in values {
        let t = sum + value;
        if sum.abs() >= value.abs() {
            compensation += (sum - t) + value;
        } else {
            compensation += (value - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(neumaier_sum(values.iter().copied()) / values.len() as f64)
    }
}

/// Groups rows by (config, harm percentage) in first-seen order and
/// averages each metric over its defined entries.
pub fn aggregate(rows: &[SequenceRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().find(|r| r.n != first.n) {
            return Err(HarnessError::Aggregation {
                message: format!(
                    "mixed sequence lengths in aggregation: {} and {}",
                    first.n, bad.n
                ),
            });
        }
    }

    let mut order: Vec<(String, u32)> = Vec::new();
    let mut groups: BTreeMap<(String, u32), Vec<&SequenceRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.config_id.clone(), row.harm_pct);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row);
    }

    let mut aggregates = Vec::with_capacity(order.len());
    for key in order {
        let members = &groups[&key];
        let mut tp: BTreeMap<usize, AggregateCell> = BTreeMap::new();
        let mut pp: BTreeMap<usize, AggregateCell> = BTreeMap::new();

        let tp_keys: Vec<usize> = members[0].metrics.tp.keys().copied().collect();
        for k in tp_keys {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|r| r.metrics.tp.get(&k).and_then(|v| v.value()))
                .collect();
            tp.insert(
                k,
                AggregateCell {
                    mean: mean_of(&values),
                    contributing: values.len(),
                },
            );
        }
        let pp_keys: Vec<usize> = members[0].metrics.pp.keys().copied().collect();
        for k in pp_keys {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|r| r.metrics.pp.get(&k).and_then(|v| v.value()))
                .collect();
            pp.insert(
                k,
                AggregateCell {
                    mean: mean_of(&values),
                    contributing: values.len(),
                },
            );
        }
        let ewn_values: Vec<f64> = members.iter().map(|r| r.metrics.ewn).collect();
        let mut telemetry = RerankTelemetry::default();
        for row in members {
            telemetry.absorb(&row.telemetry);
        }
        aggregates.push(AggregateRow {
            config_id: key.0,
            harm_pct: key.1,
            n_sequences: members.len(),
            tp,
            pp,
            ewn: AggregateCell {
                mean: mean_of(&ewn_values),
                contributing: ewn_values.len(),
            },
            ewn_degenerate_count: members.iter().filter(|r| r.metrics.ewn_degenerate).count(),
            telemetry,
        });
    }
    Ok(aggregates)
}

/// Output artifacts for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Full detail with per-sequence rows (`report.json`).
    Json,
    /// One aggregate row per (config, harm percentage) (`aggregate.csv`).
    AggregateCsv,
    /// Long-form (config, metric, harm_pct, value) rows for plotting
    /// (`plot_data.csv`); undefined cells are omitted.
    PlotCsv,
}

fn format_cell(cell: &AggregateCell) -> String {
    match cell.mean {
        Some(value) => format!("{value:.6}"),
        None => "-".to_string(),
    }
}

fn write_aggregate_csv(report: &MetricsReport, path: &Path) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| HarnessError::Io {
        message: format!("failed to write {}: {e}", path.display()),
    })?;
    let mut header = vec!["config".to_string(), "harm_pct".to_string()];
    for k in &report.config.k_tp {
        header.push(format!("tp{k}"));
    }
    for k in &report.config.k_pp {
        header.push(format!("pp{k}"));
    }
    header.push("ewn".to_string());
    header.push("n_sequences".to_string());
    writer.write_record(&header).map_err(csv_error(path))?;

    for row in &report.aggregates {
        let mut record = vec![row.config_id.clone(), row.harm_pct.to_string()];
        for k in &report.config.k_tp {
            record.push(row.tp.get(k).map_or("-".to_string(), format_cell));
        }
        for k in &report.config.k_pp {
            record.push(row.pp.get(k).map_or("-".to_string(), format_cell));
        }
        record.push(format_cell(&row.ewn));
        record.push(row.n_sequences.to_string());
        writer.write_record(&record).map_err(csv_error(path))?;
    }
    writer.flush().map_err(|e| HarnessError::Io {
        message: format!("failed to flush {}: {e}", path.display()),
    })
}

fn write_plot_csv(report: &MetricsReport, path: &Path) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| HarnessError::Io {
        message: format!("failed to write {}: {e}", path.display()),
    })?;
    writer
        .write_record(["config", "metric", "harm_pct", "value"])
        .map_err(csv_error(path))?;
    for row in &report.aggregates {
        let mut cells: Vec<(String, &AggregateCell)> = Vec::new();
        for (k, cell) in &row.tp {
            cells.push((format!("tp{k}"), cell));
        }
        for (k, cell) in &row.pp {
            cells.push((format!("pp{k}"), cell));
        }
        cells.push(("ewn".to_string(), &row.ewn));
        for (metric, cell) in cells {
            if let Some(value) = cell.mean {
                writer
                    .write_record([
                        row.config_id.clone(),
                        metric,
                        row.harm_pct.to_string(),
                        format!("{value:.6}"),
                    ])
                    .map_err(csv_error(path))?;
            }
        }
    }
    writer.flush().map_err(|e| HarnessError::Io {
        message: format!("failed to flush {}: {e}", path.display()),
    })
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        message: format!("failed to write {}: {e}", path.display()),
    }
}

/// Writes the requested artifacts into `out_dir`, returning their paths.
pub fn emit_report(
    report: &MetricsReport,
    out_dir: impl AsRef<Path>,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
        message: format!("failed to create {}: {e}", out_dir.display()),
    })?;
    let mut written = Vec::new();
    for format in formats {
        let path = match format {
            ReportFormat::Json => {
                let path = out_dir.join("report.json");
                let body = serde_json::to_vec_pretty(report).map_err(|e| HarnessError::Io {
                    message: format!("failed to serialize report: {e}"),
                })?;
                fs::write(&path, body).map_err(|e| HarnessError::Io {
                    message: format!("failed to write {}: {e}", path.display()),
                })?;
                path
            }
            ReportFormat::AggregateCsv => {
                let path = out_dir.join("aggregate.csv");
                write_aggregate_csv(report, &path)?;
                path
            }
            ReportFormat::PlotCsv => {
                let path = out_dir.join("plot_data.csv");
                write_plot_csv(report, &path)?;
                path
            }
        };
        written.push(path);
    }
    Ok(written)
}
