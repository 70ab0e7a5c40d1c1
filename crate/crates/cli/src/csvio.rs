//! CSV readers/writers for the documented table schemas.

use crate::CliError;
use qkd_core::detection::cell_index;
use qkd_core::inference::{from_unbounded, to_unbounded, Chain};
use qkd_core::params::{ParamId, PriorSpec};
use qkd_core::simulate::{OutcomeCounts, PulseRecord};
use std::path::Path;

pub const OUTCOME_LABELS: [&str; 4] = ["00", "01", "10", "11"];

fn input_err(msg: String) -> CliError {
    CliError { code: 3, msg }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError { code: 3, msg: format!("cannot write {}: {e}", path.display()) }
}

/// Schema: `m,lambda_index,outcome,count`, rows in layout order.
pub fn write_counts(path: &Path, counts: &OutcomeCounts) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["m", "lambda_index", "outcome", "count"])
        .map_err(|e| write_err(path, e))?;
    for m in 0..2 {
        for (o, label) in OUTCOME_LABELS.iter().enumerate() {
            for l in 0..counts.n_lambda {
                let c = counts.cells[cell_index(m, o, l, counts.n_lambda)];
                w.write_record([m.to_string(), l.to_string(), (*label).to_string(), c.to_string()])
                    .map_err(|e| write_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn read_counts(path: &Path, n_lambda: usize) -> Result<OutcomeCounts, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let mut counts = OutcomeCounts::new(n_lambda);
    let mut seen = vec![false; 8 * n_lambda];
    for rec in r.records() {
        let rec = rec.map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        if rec.len() != 4 {
            return Err(input_err(format!("{}: expected 4 columns", path.display())));
        }
        let m: usize = rec[0].parse().map_err(|_| input_err(format!("bad m field '{}'", &rec[0])))?;
        let l: usize = rec[1].parse().map_err(|_| input_err(format!("bad lambda_index '{}'", &rec[1])))?;
        let o = OUTCOME_LABELS
            .iter()
            .position(|&s| s == &rec[2])
            .ok_or_else(|| input_err(format!("bad outcome label '{}'", &rec[2])))?;
        let c: u64 = rec[3].parse().map_err(|_| input_err(format!("bad count '{}'", &rec[3])))?;
        if m > 1 || l >= n_lambda {
            return Err(input_err(format!(
                "cell (m={m}, lambda_index={l}) is outside the layout for {n_lambda} intensities"
            )));
        }
        let idx = cell_index(m, o, l, n_lambda);
        if seen[idx] {
            return Err(input_err(format!("duplicate cell (m={m}, outcome={}, lambda={l})", &rec[2])));
        }
        seen[idx] = true;
        counts.cells[idx] = c;
        counts.total += c;
    }
    if seen.iter().any(|&s| !s) {
        return Err(input_err(format!(
            "{} is missing cells for {n_lambda} intensities",
            path.display()
        )));
    }
    Ok(counts)
}

/// Schema: `t,d0,d1,lambda_index,a,b,x,e`.
pub struct RecordsWriter {
    w: csv::Writer<std::fs::File>,
}

impl RecordsWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
        w.write_record(["t", "d0", "d1", "lambda_index", "a", "b", "x", "e"])
            .map_err(|e| write_err(path, e))?;
        Ok(RecordsWriter { w })
    }

    pub fn write(&mut self, r: &PulseRecord) -> csv::Result<()> {
        self.w.write_record([
            r.t.to_string(),
            r.d0.to_string(),
            r.d1.to_string(),
            r.lambda_index.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.x.to_string(),
            r.e.to_string(),
        ])
    }

    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        self.w.flush().map_err(|e| write_err(path, e))
    }
}

/// Schema: `sample_index,<param names>,log_posterior`, values in natural space.
pub fn write_chain(
    path: &Path,
    chain: &Chain,
    free: &[(ParamId, PriorSpec)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    let mut header = vec!["sample_index".to_string()];
    header.extend(free.iter().map(|(id, _)| id.name()));
    header.push("log_posterior".to_string());
    w.write_record(&header).map_err(|e| write_err(path, e))?;
    for (i, phi) in chain.samples.iter().enumerate() {
        let values = from_unbounded(phi, free);
        let mut row = vec![i.to_string()];
        row.extend(values.iter().map(|v| format!("{v:.17e}")));
        row.push(format!("{:.17e}", chain.log_posterior[i]));
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn read_chain(path: &Path, free: &[(ParamId, PriorSpec)]) -> Result<Chain, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input_err(format!("{}: missing column '{name}'", path.display())))
    };
    let param_cols: Vec<usize> = free
        .iter()
        .map(|(id, _)| col(&id.name()))
        .collect::<Result<_, _>>()?;
    let lp_col = col("log_posterior")?;
    let mut samples = Vec::new();
    let mut lps = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        let values: Vec<f64> = param_cols
            .iter()
            .map(|&c| {
                rec[c]
                    .parse::<f64>()
                    .map_err(|_| input_err(format!("bad number '{}'", &rec[c])))
            })
            .collect::<Result<_, _>>()?;
        let phi = to_unbounded(&values, free)
            .map_err(|e| input_err(format!("{}: sample outside prior support: {e}", path.display())))?;
        samples.push(phi);
        lps.push(
            rec[lp_col]
                .parse::<f64>()
                .map_err(|_| input_err(format!("bad log_posterior '{}'", &rec[lp_col])))?,
        );
    }
    if samples.is_empty() {
        return Err(input_err(format!("{} holds no samples", path.display())));
    }
    Ok(Chain { samples, log_posterior: lps, seed: 0, burn_in: 0 })
}

/// Schema: `distance_km,protocol,intensity,K`.
pub fn write_curves(path: &Path, points: &[qkd_core::keyrate::CurvePoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["distance_km", "protocol", "intensity", "K"])
        .map_err(|e| write_err(path, e))?;
    for p in points {
        w.write_record([
            format!("{}", p.distance_km),
            p.protocol.to_string(),
            format!("{}", p.intensity),
            format!("{:.12e}", p.rate),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Schema: `lambda_index,sample_index,K`.
pub fn write_keyrate_samples(
    path: &Path,
    samples: &[qkd_core::keyrate::KeyRateSamples],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["lambda_index", "sample_index", "K"])
        .map_err(|e| write_err(path, e))?;
    for ks in samples {
        for (i, k) in ks.rates.iter().enumerate() {
            w.write_record([ks.lambda_index.to_string(), i.to_string(), format!("{k:.12e}")])
                .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Schema: `m,lambda_index,outcome,probability,inside_runs,total_runs,coverage`.
pub struct CoverageRow {
    pub m: usize,
    pub lambda_index: usize,
    pub outcome: usize,
    pub probability: f64,
    pub inside_runs: u64,
    pub total_runs: u64,
}

pub fn write_coverage(path: &Path, rows: &[CoverageRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record([
        "m",
        "lambda_index",
        "outcome",
        "probability",
        "inside_runs",
        "total_runs",
        "coverage",
    ])
    .map_err(|e| write_err(path, e))?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.lambda_index.to_string(),
            OUTCOME_LABELS[r.outcome].to_string(),
            format!("{:.12e}", r.probability),
            r.inside_runs.to_string(),
            r.total_runs.to_string(),
            format!("{:.6}", r.inside_runs as f64 / r.total_runs as f64),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}
