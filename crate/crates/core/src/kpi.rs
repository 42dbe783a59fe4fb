//! Per-window KPI aggregation, report serialization and comparison.
//!
//! CSV columns, in order: `t, avg_tput_bps, min_tput_bps, ho_count,
//! interruption_ms, lbi, load_b0 .. load_b{B-1}`. JSON uses the field names
//! of [`KpiReport`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::lbi;
use crate::sim::StepRecord;

#[derive(Debug, Error)]
pub enum KpiError {
    #[error("no step records to aggregate")]
    Empty,
    #[error("step records disagree on {what}")]
    Inconsistent { what: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: malformed csv report: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("reports describe different scenarios: {a} vs {b}")]
    ScenarioMismatch { a: String, b: String },
}

/// KPIs of one optimization window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    /// End of the window, seconds since the episode start.
    pub t: f64,
    /// Mean over UEs of served bits per second.
    pub avg_throughput: f64,
    /// Smallest per-UE served bits per second.
    pub min_throughput: f64,
    pub ho_count: u64,
    pub interruption_ms: f64,
    pub lbi: f64,
    /// Mean band load over the window.
    pub per_band_load: Vec<f64>,
}

/// Means over windows, plus episode totals for the handover counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiAggregates {
    pub windows: usize,
    pub avg_throughput: f64,
    pub min_throughput: f64,
    pub ho_count: f64,
    pub interruption_ms: f64,
    pub lbi: f64,
    pub per_band_load: Vec<f64>,
    pub total_ho_count: u64,
    pub total_interruption_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub n_cells: usize,
    pub n_ues_per_cell: usize,
    pub n_bands: usize,
    pub window_s: f64,
    pub ho_interruption_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub metadata: ReportMetadata,
    pub windows: Vec<KpiRow>,
    pub aggregates: KpiAggregates,
}

impl KpiAggregates {
    pub fn from_rows(rows: &[KpiRow], n_bands: usize) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&KpiRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let per_band_load = (0..n_bands)
            .map(|b| mean(&|r: &KpiRow| r.per_band_load.get(b).copied().unwrap_or(0.0)))
            .collect();
        Self {
            windows: n,
            avg_throughput: mean(&|r| r.avg_throughput),
            min_throughput: mean(&|r| r.min_throughput),
            ho_count: mean(&|r| r.ho_count as f64),
            interruption_ms: mean(&|r| r.interruption_ms),
            lbi: if n == 0 { 1.0 } else { mean(&|r| r.lbi) },
            per_band_load,
            total_ho_count: rows.iter().map(|r| r.ho_count).sum(),
            total_interruption_ms: rows.iter().map(|r| r.interruption_ms).sum(),
        }
    }
}

impl KpiReport {
    pub fn new(metadata: ReportMetadata, windows: Vec<KpiRow>) -> Self {
        let aggregates = KpiAggregates::from_rows(&windows, metadata.n_bands);
        Self {
            metadata,
            windows,
            aggregates,
        }
    }
}

/// KPIs of the records of one window lasting `window_s` seconds.
pub fn aggregate_window(records: &[StepRecord], window_s: f64) -> Result<KpiRow, KpiError> {
    let first = records.first().ok_or(KpiError::Empty)?;
    let (nu, nb) = (first.served_bits.len(), first.band_loads.len());
    let mut served = vec![0.0; nu];
    let mut loads = vec![0.0; nb];
    let mut ho_count = 0u64;
    let mut interruption_ms = 0.0;
    for r in records {
        if r.served_bits.len() != nu {
            return Err(KpiError::Inconsistent { what: "UE count" });
        }
        if r.band_loads.len() != nb {
            return Err(KpiError::Inconsistent { what: "band count" });
        }
        for (s, v) in served.iter_mut().zip(&r.served_bits) {
            *s += v;
        }
        for (l, v) in loads.iter_mut().zip(&r.band_loads) {
            *l += v;
        }
        ho_count += r.handovers as u64;
        interruption_ms += r.interruption_ms;
    }
    let tput: Vec<f64> = served.iter().map(|s| s / window_s).collect();
    let avg = if nu == 0 {
        0.0
    } else {
        tput.iter().sum::<f64>() / nu as f64
    };
    let min = tput.iter().copied().fold(f64::INFINITY, f64::min);
    let index = lbi(&loads);
    for l in &mut loads {
        *l /= records.len() as f64;
    }
    Ok(KpiRow {
        t: records.last().map_or(0.0, |r| r.timestamp),
        avg_throughput: avg,
        min_throughput: if nu == 0 { 0.0 } else { min },
        ho_count,
        interruption_ms,
        lbi: index,
        per_band_load: loads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn csv_header(n_bands: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "avg_tput_bps",
        "min_tput_bps",
        "ho_count",
        "interruption_ms",
        "lbi",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..n_bands).map(|b| format!("load_b{b}")));
    h
}

pub fn write_report(report: &KpiReport, format: ReportFormat, path: &Path) -> Result<(), KpiError> {
    let io_err = |source| KpiError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    match format {
        ReportFormat::Json => {
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, report).map_err(|source| KpiError::Json {
                path: path.to_path_buf(),
                source,
            })?;
            w.write_all(b"\n").map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        ReportFormat::Csv => {
            let csv_err = |source| KpiError::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut w = csv::Writer::from_writer(file);
            w.write_record(csv_header(report.metadata.n_bands))
                .map_err(csv_err)?;
            for row in &report.windows {
                let mut rec = vec![
                    row.t.to_string(),
                    row.avg_throughput.to_string(),
                    row.min_throughput.to_string(),
                    row.ho_count.to_string(),
                    row.interruption_ms.to_string(),
                    row.lbi.to_string(),
                ];
                rec.extend(row.per_band_load.iter().map(f64::to_string));
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

pub fn read_report_json(path: &Path) -> Result<KpiReport, KpiError> {
    let file = File::open(path).map_err(|source| KpiError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| KpiError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Window rows of a CSV report.
pub fn read_report_csv(path: &Path) -> Result<Vec<KpiRow>, KpiError> {
    let csv_err = |source| KpiError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let malformed = |detail: String| KpiError::Malformed {
        path: path.to_path_buf(),
        detail,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let n_bands = header.len().saturating_sub(6);
    let expected = csv_header(n_bands);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64, KpiError> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| malformed(format!("column {}: {e}", expected[i])))
        };
        rows.push(KpiRow {
            t: num(0)?,
            avg_throughput: num(1)?,
            min_throughput: num(2)?,
            ho_count: rec[3]
                .parse()
                .map_err(|e| malformed(format!("column ho_count: {e}")))?,
            interruption_ms: num(4)?,
            lbi: num(5)?,
            per_band_load: (6..6 + n_bands).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

/// Ratios `a / b` of episode aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiComparison {
    pub avg_throughput: f64,
    pub min_throughput: f64,
    pub ho_count: f64,
    pub interruption_ms: f64,
    pub lbi: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

pub fn compare_reports(a: &KpiReport, b: &KpiReport) -> Result<KpiComparison, KpiError> {
    let (ma, mb) = (&a.metadata, &b.metadata);
    if ma.scenario != mb.scenario
        || ma.n_bands != mb.n_bands
        || ma.n_ues_per_cell != mb.n_ues_per_cell
    {
        return Err(KpiError::ScenarioMismatch {
            a: ma.scenario.clone(),
            b: mb.scenario.clone(),
        });
    }
    let (x, y) = (&a.aggregates, &b.aggregates);
    Ok(KpiComparison {
        avg_throughput: ratio(x.avg_throughput, y.avg_throughput),
        min_throughput: ratio(x.min_throughput, y.min_throughput),
        ho_count: ratio(x.ho_count, y.ho_count),
        interruption_ms: ratio(x.interruption_ms, y.interruption_ms),
        lbi: ratio(x.lbi, y.lbi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, served: Vec<f64>, loads: Vec<f64>, handovers: usize) -> StepRecord {
        let n = served.len();
        StepRecord {
            timestamp: t,
            served_bits: served,
            arrived_bits: vec![0.0; n],
            backlog_bits: vec![0.0; n],
            band_loads: loads,
            handovers,
            interruption_ms: handovers as f64 * 50.0,
        }
    }

    pub(crate) fn metadata(scenario: &str, n_bands: usize) -> ReportMetadata {
        ReportMetadata {
            scenario: scenario.into(),
            algorithm: "pmlb".into(),
            seed: 1,
            n_cells: 1,
            n_ues_per_cell: 2,
            n_bands,
            window_s: 1.0,
            ho_interruption_ms: 50.0,
        }
    }

    #[test]
    fn single_ue_window() {
        let row = aggregate_window(&[record(1.0, vec![1.2e6], vec![0.5, 0.5], 0)], 1.0).unwrap();
        assert_eq!(row.avg_throughput, 1.2e6);
        assert_eq!(row.min_throughput, 1.2e6);
        assert_eq!(row.interruption_ms, 0.0);
        assert_eq!(row.lbi, 1.0);
    }

    #[test]
    fn two_ue_window() {
        let recs = vec![
            record(0.5, vec![0.5e6, 1.5e6], vec![1.0, 0.0], 1),
            record(1.0, vec![0.5e6, 1.5e6], vec![1.0, 0.0], 2),
        ];
        let row = aggregate_window(&recs, 1.0).unwrap();
        assert_eq!(row.avg_throughput, 2e6);
        assert_eq!(row.min_throughput, 1e6);
        assert_eq!(row.ho_count, 3);
        assert_eq!(row.interruption_ms, 150.0);
        assert_eq!(row.lbi, 0.5);
        assert_eq!(row.per_band_load, vec![1.0, 0.0]);
        assert!(matches!(aggregate_window(&[], 1.0), Err(KpiError::Empty)));
    }

    fn sample_report() -> KpiReport {
        let rows = vec![
            KpiRow {
                t: 120.0,
                avg_throughput: 1.5e6 / 3.0,
                min_throughput: 1e5,
                ho_count: 4,
                interruption_ms: 200.0,
                lbi: 0.93,
                per_band_load: vec![0.1, 0.2, 0.3, 0.4],
            },
            KpiRow {
                t: 240.0,
                avg_throughput: 2.0e6,
                min_throughput: 0.1 + 0.2,
                ho_count: 0,
                interruption_ms: 0.0,
                lbi: 1.0,
                per_band_load: vec![0.25; 4],
            },
        ];
        KpiReport::new(metadata("A", 4), rows)
    }

    #[test]
    fn csv_schema_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = sample_report();
        write_report(&report, ReportFormat::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,avg_tput_bps,min_tput_bps,ho_count,interruption_ms,lbi,load_b0,load_b1,load_b2,load_b3"
        );
        assert_eq!(header.split(',').count(), 6 + 4);
        assert_eq!(read_report_csv(&path).unwrap(), report.windows);

        let empty = KpiReport::new(metadata("A", 4), vec![]);
        write_report(&empty, ReportFormat::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let report = sample_report();
        write_report(&report, ReportFormat::Json, &path).unwrap();
        assert_eq!(read_report_json(&path).unwrap(), report);
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = write_report(
            &sample_report(),
            ReportFormat::Csv,
            Path::new("/nonexistent/dir/r.csv"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/r.csv"));
    }

    #[test]
    fn comparisons() {
        let a = sample_report();
        let c = compare_reports(&a, &a).unwrap();
        assert_eq!(
            (
                c.avg_throughput,
                c.min_throughput,
                c.ho_count,
                c.interruption_ms,
                c.lbi
            ),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
        let mut b = a.clone();
        for r in &mut b.windows {
            r.avg_throughput *= 2.0;
        }
        let b = KpiReport::new(b.metadata, b.windows);
        assert!((compare_reports(&b, &a).unwrap().avg_throughput - 2.0).abs() < 1e-12);
        let other = KpiReport::new(metadata("B", 4), a.windows.clone());
        assert!(matches!(
            compare_reports(&a, &other),
            Err(KpiError::ScenarioMismatch { .. })
        ));
    }

    #[test]
    fn aggregates_sum_windows() {
        let r = sample_report();
        assert_eq!(r.aggregates.total_ho_count, 4);
        assert_eq!(r.aggregates.ho_count, 2.0);
        assert_eq!(r.aggregates.windows, 2);
    }
}
