//! Blocking probability, utilization series and report serialization.
//!
//! `bp.csv` columns, in order: seed, strategy, band_plan, n_requests,
//! n_blocked, n_dropped, n_provisioned, n_compressed, n_delayed, bp_total,
//! bp_type_1, bp_type_2a, bp_type_2b, bp_type_3a, bp_type_3b,
//! util_h00..util_h23. Utilization columns hold the snapshot day. Undefined
//! values are written as empty fields.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ExportError;
use crate::provisioning::StrategyKind;
use crate::schedule::{TICKS_PER_DAY, TICKS_PER_HOUR};
use crate::spectrum::BandPlanKind;
use crate::traffic::TrafficType;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub requests: u64,
    pub blocked: u64,
    pub dropped: u64,
    pub provisioned: u64,
    pub compressed: u64,
    pub delayed: u64,
    pub pending: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub strategy: StrategyKind,
    pub band_plan: BandPlanKind,
    pub config_hash: String,
    /// sha256 over the canonical lines of every generated request.
    pub stream_hash: String,
    pub n_requests: u64,
    pub n_blocked: u64,
    pub n_dropped: u64,
    pub n_provisioned: u64,
    pub n_compressed: u64,
    pub n_delayed: u64,
    pub n_pending: u64,
    pub per_type: BTreeMap<TrafficType, TypeCounts>,
    /// 24 hourly averages per simulated day.
    pub hourly_utilization: Vec<Vec<f64>>,
    pub snapshot_day: usize,
    pub end_tick: u64,
}

impl MetricsReport {
    pub fn snapshot(&self) -> Option<&[f64]> {
        self.hourly_utilization.get(self.snapshot_day).map(Vec::as_slice)
    }

    /// Totals agree with per-type counts and every request sits in one
    /// terminal bucket.
    pub fn check_conservation(&self) -> Result<(), String> {
        if self.n_requests != self.n_blocked + self.n_provisioned + self.n_pending {
            return Err(format!(
                "requests {} != blocked {} + provisioned {} + pending {}",
                self.n_requests, self.n_blocked, self.n_provisioned, self.n_pending
            ));
        }
        if self.n_dropped > self.n_provisioned {
            return Err("more drops than provisioned lightpaths".into());
        }
        let sum = |f: fn(&TypeCounts) -> u64| self.per_type.values().map(f).sum::<u64>();
        let pairs = [
            ("requests", self.n_requests, sum(|c| c.requests)),
            ("blocked", self.n_blocked, sum(|c| c.blocked)),
            ("dropped", self.n_dropped, sum(|c| c.dropped)),
            ("provisioned", self.n_provisioned, sum(|c| c.provisioned)),
            ("compressed", self.n_compressed, sum(|c| c.compressed)),
            ("delayed", self.n_delayed, sum(|c| c.delayed)),
            ("pending", self.n_pending, sum(|c| c.pending)),
        ];
        for (name, total, by_type) in pairs {
            if total != by_type {
                return Err(format!("{name}: total {total} != per-type sum {by_type}"));
            }
        }
        for (d, day) in self.hourly_utilization.iter().enumerate() {
            if day.len() != 24 || day.iter().any(|u| !(0.0..=1.0).contains(u)) {
                return Err(format!("day {d} utilization out of shape or range"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingProbability {
    pub total: Option<f64>,
    pub per_type: BTreeMap<TrafficType, Option<f64>>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn blocking_probability(report: &MetricsReport) -> BlockingProbability {
    BlockingProbability {
        total: ratio(report.n_blocked, report.n_requests),
        per_type: TrafficType::ALL
            .iter()
            .map(|&t| {
                let c = report.per_type.get(&t).cloned().unwrap_or_default();
                (t, ratio(c.blocked, c.requests))
            })
            .collect(),
    }
}

/// `(bp − bp_ndnc) / bp_ndnc`; absent when the baseline is zero.
pub fn relative_bp(bp: f64, ndnc_bp: f64) -> Option<f64> {
    (ndnc_bp > 0.0).then(|| (bp - ndnc_bp) / ndnc_bp)
}

/// Time-weighted hourly averages of the step function defined by
/// `samples` (tick, value), sorted by tick. The value before the first
/// sample is 0.
pub fn hourly_utilization(samples: &[(u64, f64)], n_days: usize) -> Vec<Vec<f64>> {
    let end = n_days as u64 * TICKS_PER_DAY;
    let mut sums = vec![0.0f64; n_days * 24];
    let mut add = |from: u64, to: u64, v: f64| {
        let mut t = from;
        while t < to {
            let hour = t / TICKS_PER_HOUR;
            let stop = ((hour + 1) * TICKS_PER_HOUR).min(to);
            sums[hour as usize] += v * (stop - t) as f64;
            t = stop;
        }
    };
    let mut prev = (0u64, 0.0f64);
    for &(t, v) in samples {
        let t = t.min(end);
        add(prev.0, t, prev.1);
        prev = (t.max(prev.0), v);
    }
    add(prev.0, end, prev.1);
    sums.chunks(24)
        .map(|day| day.iter().map(|s| s / TICKS_PER_HOUR as f64).collect())
        .collect()
}

/// One `bp.csv` row. Per-seed rows carry the seed number; aggregate rows
/// carry `mean` or `std`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: String,
    pub strategy: String,
    pub band_plan: String,
    pub values: Vec<Option<f64>>,
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "seed",
        "strategy",
        "band_plan",
        "n_requests",
        "n_blocked",
        "n_dropped",
        "n_provisioned",
        "n_compressed",
        "n_delayed",
        "bp_total",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(TrafficType::ALL.iter().map(|t| format!("bp_type_{t}")));
    h.extend((0..24).map(|i| format!("util_h{i:02}")));
    h
}

impl ReportRow {
    pub fn from_report(r: &MetricsReport) -> Self {
        let bp = blocking_probability(r);
        let mut values: Vec<Option<f64>> = [
            r.n_requests,
            r.n_blocked,
            r.n_dropped,
            r.n_provisioned,
            r.n_compressed,
            r.n_delayed,
        ]
        .iter()
        .map(|&n| Some(n as f64))
        .collect();
        values.push(bp.total);
        values.extend(bp.per_type.values().copied());
        match r.snapshot() {
            Some(day) => values.extend(day.iter().map(|&u| Some(u))),
            None => values.extend(std::iter::repeat_n(None, 24)),
        }
        Self {
            seed: r.seed.to_string(),
            strategy: r.strategy.to_string(),
            band_plan: r.band_plan.to_string(),
            values,
        }
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        let i = csv_header().iter().position(|c| c == column)?;
        self.values.get(i.checked_sub(3)?).copied().flatten()
    }

    fn record(&self) -> Vec<String> {
        let mut rec = vec![self.seed.clone(), self.strategy.clone(), self.band_plan.clone()];
        rec.extend(self.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        rec
    }
}

/// Mean and sample standard deviation of every column across `rows`,
/// ignoring absent values.
pub fn aggregate(rows: &[ReportRow]) -> (ReportRow, ReportRow) {
    let width = rows.first().map_or(csv_header().len() - 3, |r| r.values.len());
    let mut mean = Vec::with_capacity(width);
    let mut std = Vec::with_capacity(width);
    for i in 0..width {
        let xs: Vec<f64> = rows.iter().filter_map(|r| r.values[i]).collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            mean.push(None);
            std.push(None);
            continue;
        }
        let m = xs.iter().sum::<f64>() / n;
        mean.push(Some(m));
        std.push((xs.len() > 1).then(|| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()));
    }
    let label = |s: &str| ReportRow {
        seed: s.into(),
        strategy: rows.first().map(|r| r.strategy.clone()).unwrap_or_default(),
        band_plan: rows.first().map(|r| r.band_plan.clone()).unwrap_or_default(),
        values: Vec::new(),
    };
    (
        ReportRow {
            values: mean,
            ..label("mean")
        },
        ReportRow { values: std, ..label("std") },
    )
}

/// Per-seed rows followed by mean and std for each (strategy, band plan)
/// group, in first-appearance order.
pub fn bp_rows(reports: &[MetricsReport]) -> Vec<ReportRow> {
    let mut groups: Vec<((StrategyKind, BandPlanKind), Vec<ReportRow>)> = Vec::new();
    for r in reports {
        let key = (r.strategy, r.band_plan);
        let row = ReportRow::from_report(r);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    let mut out = Vec::new();
    for (_, rows) in groups {
        let (mean, std) = aggregate(&rows);
        out.extend(rows);
        out.push(mean);
        out.push(std);
    }
    out
}

/// Write `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    let io = |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn csv_bytes(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, ExportError> {
    let err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| ExportError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })
}

pub fn write_bp_csv(path: &Path, rows: &[ReportRow]) -> Result<(), ExportError> {
    let bytes = csv_bytes(path, &csv_header(), rows.iter().map(ReportRow::record))?;
    write_atomic(path, &bytes)
}

pub fn read_bp_csv(path: &Path) -> Result<Vec<ReportRow>, ExportError> {
    let err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let values = rec
            .iter()
            .skip(3)
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|e| ExportError::Io {
                        path: path.to_path_buf(),
                        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                    })
                }
            })
            .collect::<Result<_, _>>()?;
        rows.push(ReportRow {
            seed: rec[0].to_string(),
            strategy: rec[1].to_string(),
            band_plan: rec[2].to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Long format: strategy, band_plan, seed, day, hour, utilization.
pub fn write_utilization_csv(path: &Path, reports: &[MetricsReport]) -> Result<(), ExportError> {
    let header: Vec<String> = ["strategy", "band_plan", "seed", "day", "hour", "utilization"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = reports.iter().flat_map(|r| {
        r.hourly_utilization.iter().enumerate().flat_map(move |(d, day)| {
            day.iter().enumerate().map(move |(h, u)| {
                vec![
                    r.strategy.to_string(),
                    r.band_plan.to_string(),
                    r.seed.to_string(),
                    d.to_string(),
                    h.to_string(),
                    u.to_string(),
                ]
            })
        })
    });
    let bytes = csv_bytes(path, &header, rows)?;
    write_atomic(path, &bytes)
}

/// Relative BP of each non-NDNC cell against the NDNC cell of the same
/// band plan, computed on seed-mean BPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeBp {
    pub strategy: StrategyKind,
    pub band_plan: BandPlanKind,
    /// `None` for the whole network, otherwise the traffic type.
    pub type_id: Option<TrafficType>,
    pub bp: Option<f64>,
    pub ndnc_bp: Option<f64>,
    pub relative_bp: Option<f64>,
}

fn mean_bp(reports: &[&MetricsReport], t: Option<TrafficType>) -> Option<f64> {
    let xs: Vec<f64> = reports
        .iter()
        .filter_map(|r| {
            let bp = blocking_probability(r);
            match t {
                None => bp.total,
                Some(t) => bp.per_type[&t],
            }
        })
        .collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn relative_bps(reports: &[MetricsReport]) -> Vec<RelativeBp> {
    let mut cells: Vec<(StrategyKind, BandPlanKind)> = Vec::new();
    for r in reports {
        if !cells.contains(&(r.strategy, r.band_plan)) {
            cells.push((r.strategy, r.band_plan));
        }
    }
    let pick = |s: StrategyKind, b: BandPlanKind| -> Vec<&MetricsReport> {
        reports.iter().filter(|r| r.strategy == s && r.band_plan == b).collect()
    };
    let mut out = Vec::new();
    for &(s, b) in &cells {
        if s == StrategyKind::NDNC {
            continue;
        }
        let base = pick(StrategyKind::NDNC, b);
        if base.is_empty() {
            continue;
        }
        let this = pick(s, b);
        let types = std::iter::once(None).chain(TrafficType::ALL.iter().copied().map(Some));
        for t in types {
            let bp = mean_bp(&this, t);
            let ndnc_bp = mean_bp(&base, t);
            out.push(RelativeBp {
                strategy: s,
                band_plan: b,
                type_id: t,
                bp,
                ndnc_bp,
                relative_bp: bp.zip(ndnc_bp).and_then(|(x, y)| relative_bp(x, y)),
            });
        }
    }
    out
}

/// Writes `relative_bp.csv` (whole network per strategy and band plan)
/// and `relative_bp_by_type.csv` (per traffic type).
pub fn write_relative_csvs(dir: &Path, rel: &[RelativeBp]) -> Result<(), ExportError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let header = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let path = dir.join("relative_bp.csv");
    let rows = rel.iter().filter(|r| r.type_id.is_none()).map(|r| {
        vec![
            r.strategy.to_string(),
            r.band_plan.to_string(),
            opt(r.bp),
            opt(r.ndnc_bp),
            opt(r.relative_bp),
        ]
    });
    let bytes = csv_bytes(&path, &header(&["strategy", "band_plan", "bp", "bp_ndnc", "relative_bp"]), rows)?;
    write_atomic(&path, &bytes)?;
    let path = dir.join("relative_bp_by_type.csv");
    let rows = rel.iter().filter_map(|r| {
        r.type_id.map(|t| {
            vec![
                r.strategy.to_string(),
                r.band_plan.to_string(),
                t.to_string(),
                opt(r.bp),
                opt(r.ndnc_bp),
                opt(r.relative_bp),
            ]
        })
    });
    let bytes = csv_bytes(
        &path,
        &header(&["strategy", "band_plan", "type", "bp", "bp_ndnc", "relative_bp"]),
        rows,
    )?;
    write_atomic(&path, &bytes)
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: serde_json::Value,
    pub reports: Vec<MetricsReport>,
    pub relative: Vec<RelativeBp>,
}

pub fn write_report_json(path: &Path, bundle: &ReportBundle) -> Result<(), ExportError> {
    let bytes = serde_json::to_vec_pretty(bundle).map_err(|source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, &bytes)
}

pub fn read_report_json(path: &Path) -> Result<ReportBundle, ExportError> {
    let bytes = fs::read(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes bp.csv, utilization.csv and report.json into `dir`; with more
/// than one strategy present, also the relative-BP tables.
pub fn export(dir: &Path, config: serde_json::Value, reports: &[MetricsReport]) -> Result<(), ExportError> {
    write_bp_csv(&dir.join("bp.csv"), &bp_rows(reports))?;
    write_utilization_csv(&dir.join("utilization.csv"), reports)?;
    let relative = relative_bps(reports);
    if !relative.is_empty() {
        write_relative_csvs(dir, &relative)?;
    }
    write_report_json(
        &dir.join("report.json"),
        &ReportBundle {
            config,
            reports: reports.to_vec(),
            relative,
        },
    )
}
