//! CSV and JSON persistence of sweep results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-stable for fixed inputs and parse back to the same values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{BankRiskProfile, LogHistogram};
use crate::sweep::{DeltaPoint, LeverageSummary, Scenario, ScenarioResult};

pub const RESULTS_HEADER: [&str; 12] = [
    "scenario",
    "psi_or_bank",
    "ds_mean",
    "ds_std",
    "gamma_max",
    "t_star",
    "year",
    "rho",
    "lambda",
    "damping",
    "samples",
    "max_step_runs",
];

pub const PROFILES_HEADER: [&str; 6] =
    ["bank_id", "impact", "vulnerability", "leverage", "ext_leverage", "nu"];

pub const DELTA_HEADER: [&str; 9] =
    ["year", "damping", "rho", "psi_star", "ds_rho", "ds_zero", "delta_mean", "delta_std", "samples"];

pub const LEVERAGE_HEADER: [&str; 6] = ["year", "lambda", "rho", "bank_id", "leverage", "ext_leverage"];

pub const HISTOGRAM_HEADER: [&str; 8] =
    ["year", "lambda", "rho", "series", "lower", "upper", "count", "density"];

fn num(x: f64) -> String {
    format!("{x}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).from_reader(file))
}

fn check_header(record: Option<csv::StringRecord>, expected: &[&str]) -> Result<()> {
    let found = record.map(|r| r.iter().collect::<Vec<_>>().join(",")).unwrap_or_default();
    let expected = expected.join(",");
    if found != expected {
        return Err(Error::BadHeader { expected, found });
    }
    Ok(())
}

fn field(record: &csv::StringRecord, k: usize, line: u64) -> Result<&str> {
    record.get(k).ok_or_else(|| Error::MalformedRow { line, message: format!("missing column {}", k + 1) })
}

fn parse<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, line: u64) -> Result<T> {
    let raw = field(record, k, line)?;
    raw.trim().parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("cannot parse `{raw}` in column {}", k + 1),
    })
}

pub fn write_results<W: Write>(w: W, results: &[ScenarioResult]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in results {
        let (kind, key) = match &r.scenario {
            Scenario::Group { psi } => ("group", num(*psi)),
            Scenario::Individual { bank_id } => ("individual", bank_id.clone()),
        };
        out.write_record([
            kind.to_string(),
            key,
            num(r.ds.mean),
            num(r.ds.std),
            num(r.gamma_max),
            num(r.t_star),
            r.year.to_string(),
            num(r.rho),
            num(r.lambda),
            r.damping.clone(),
            r.ds.count.to_string(),
            r.max_step_runs.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn save_results(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    write_results(create(path)?, results)
}

/// One row of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub psi_or_bank: String,
    pub ds_mean: f64,
    pub ds_std: f64,
    pub gamma_max: f64,
    pub t_star: f64,
    pub year: i32,
    pub rho: f64,
    pub lambda: f64,
    pub damping: String,
    pub samples: usize,
    pub max_step_runs: usize,
}

impl ResultRow {
    /// ψ for group rows.
    pub fn psi(&self) -> Option<f64> {
        (self.scenario == "group").then(|| self.psi_or_bank.parse().ok()).flatten()
    }
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rows = csv::ReaderBuilder::new().has_headers(false).from_reader(r).into_records();
    check_header(rows.next().transpose()?, &RESULTS_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rows.enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        out.push(ResultRow {
            scenario: field(&rec, 0, line)?.to_string(),
            psi_or_bank: field(&rec, 1, line)?.to_string(),
            ds_mean: parse(&rec, 2, line)?,
            ds_std: parse(&rec, 3, line)?,
            gamma_max: parse(&rec, 4, line)?,
            t_star: parse(&rec, 5, line)?,
            year: parse(&rec, 6, line)?,
            rho: parse(&rec, 7, line)?,
            lambda: parse(&rec, 8, line)?,
            damping: field(&rec, 9, line)?.to_string(),
            samples: parse(&rec, 10, line)?,
            max_step_runs: parse(&rec, 11, line)?,
        });
    }
    Ok(out)
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_results(File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_profiles<W: Write>(w: W, profiles: &[BankRiskProfile]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(PROFILES_HEADER)?;
    for p in profiles {
        out.write_record([
            p.bank_id.clone(),
            num(p.impact),
            num(p.vulnerability),
            num(p.leverage),
            num(p.ext_leverage),
            num(p.nu),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

pub fn save_profiles(path: &Path, profiles: &[BankRiskProfile]) -> Result<()> {
    write_profiles(create(path)?, profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<BankRiskProfile>> {
    let mut rows = open(path)?.into_records();
    check_header(rows.next().transpose()?, &PROFILES_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rows.enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        out.push(BankRiskProfile {
            bank_id: field(&rec, 0, line)?.to_string(),
            impact: parse(&rec, 1, line)?,
            vulnerability: parse(&rec, 2, line)?,
            leverage: parse(&rec, 3, line)?,
            ext_leverage: parse(&rec, 4, line)?,
            nu: parse(&rec, 5, line)?,
        });
    }
    Ok(out)
}

pub fn write_delta<W: Write>(w: W, points: &[DeltaPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(DELTA_HEADER)?;
    for p in points {
        out.write_record([
            p.year.to_string(),
            p.damping.clone(),
            num(p.rho),
            num(p.psi_star),
            num(p.ds_rho),
            num(p.ds_zero),
            num(p.delta.mean),
            num(p.delta.std),
            p.delta.count.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<delta>", e))?;
    Ok(())
}

pub fn save_delta(path: &Path, points: &[DeltaPoint]) -> Result<()> {
    write_delta(create(path)?, points)
}

pub fn write_leverage<W: Write>(w: W, summaries: &[LeverageSummary]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(LEVERAGE_HEADER)?;
    for s in summaries {
        for (i, id) in s.bank_ids.iter().enumerate() {
            out.write_record([
                s.year.to_string(),
                num(s.lambda),
                num(s.rho),
                id.clone(),
                num(s.mean_leverage[i]),
                num(s.mean_extended[i]),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<leverage>", e))?;
    Ok(())
}

pub fn save_leverage(path: &Path, summaries: &[LeverageSummary]) -> Result<()> {
    write_leverage(create(path)?, summaries)
}

/// Pooled histograms, one block per year and series; the `zeros` row
/// counts values that no logarithmic bin can hold.
pub fn write_histograms<W: Write>(w: W, summaries: &[LeverageSummary]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(HISTOGRAM_HEADER)?;
    for s in summaries {
        let series: [(&str, &LogHistogram, f64); 2] = [
            ("leverage", &s.pooled.leverage_histogram, s.pooled.leverage_median),
            ("ext_leverage", &s.pooled.extended_histogram, s.pooled.extended_median),
        ];
        for (name, h, median) in series {
            let density = h.density();
            for (k, &count) in h.counts.iter().enumerate() {
                out.write_record([
                    s.year.to_string(),
                    num(s.lambda),
                    num(s.rho),
                    name.to_string(),
                    num(h.edges[k]),
                    num(h.edges[k + 1]),
                    count.to_string(),
                    num(density[k]),
                ])?;
            }
            out.write_record([
                s.year.to_string(),
                num(s.lambda),
                num(s.rho),
                format!("{name}:zeros"),
                "0".into(),
                "0".into(),
                h.zeros.to_string(),
                String::new(),
            ])?;
            out.write_record([
                s.year.to_string(),
                num(s.lambda),
                num(s.rho),
                format!("{name}:median"),
                num(median),
                num(median),
                String::new(),
                String::new(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<histograms>", e))?;
    Ok(())
}

pub fn save_histograms(path: &Path, summaries: &[LeverageSummary]) -> Result<()> {
    write_histograms(create(path)?, summaries)
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
