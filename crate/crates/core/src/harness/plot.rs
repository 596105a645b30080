//! Power-curve tables and a minimal SVG rendering of them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::run::CSV_HEADER;

#[derive(Debug, Deserialize)]
struct CsvTrial {
    #[allow(dead_code)]
    trial: usize,
    model: String,
    method: String,
    signal: f64,
    #[allow(dead_code)]
    pval: Option<f64>,
    reject: Option<u8>,
    #[allow(dead_code)]
    runtime_ms: u64,
    status: String,
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub model: String,
    pub method: String,
    pub signal: f64,
    pub power: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

/// Parsed (model, method, signal, reject) tuples for successful trials,
/// plus the number of failed trials skipped.
pub fn read_trials<R: Read>(input: R) -> Result<(Vec<(String, String, f64, bool)>, usize)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok((Vec::new(), 0));
    }
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected CSV header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    let mut failed = 0;
    for row in rdr.deserialize::<CsvTrial>() {
        let row = row?;
        if row.status != "ok" {
            failed += 1;
            continue;
        }
        let reject = match row.reject {
            Some(0) => false,
            Some(1) => true,
            other => return Err(Error::Parse(format!("reject must be 0 or 1, got {other:?}"))),
        };
        out.push((row.model, row.method, row.signal, reject));
    }
    Ok((out, failed))
}

/// Rejection rate and binomial standard error √(p̂(1−p̂)/n) per cell.
pub fn summarize(trials: &[(String, String, f64, bool)]) -> Vec<PowerRow> {
    let mut cells: BTreeMap<(String, String, u64), (f64, usize, usize)> = BTreeMap::new();
    for (model, method, signal, reject) in trials {
        // order signals numerically; the key maps non-negative floats monotonically
        let key = (model.clone(), method.clone(), order_key(*signal));
        let e = cells.entry(key).or_insert((*signal, 0, 0));
        e.1 += *reject as usize;
        e.2 += 1;
    }
    cells
        .into_iter()
        .map(|((model, method, _), (signal, k, n))| {
            let p = k as f64 / n as f64;
            PowerRow {
                model,
                method,
                signal,
                power: p,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
                n_trials: n,
            }
        })
        .collect()
}

fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn write_plot_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["model", "method", "signal", "power", "stderr", "n_trials"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.method.clone(),
            r.signal.to_string(),
            r.power.to_string(),
            r.stderr.to_string(),
            r.n_trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a trial CSV and write its power table to `out`; optionally render
/// an SVG chart. An empty input yields an empty table and a warning.
pub fn emit_plot_data(input: &Path, out: &Path, svg: Option<&Path>) -> Result<Vec<PowerRow>> {
    let (trials, failed) = read_trials(std::fs::File::open(input)?)?;
    if trials.is_empty() {
        log::warn!("{}: no successful trials; writing an empty table", input.display());
    }
    if failed > 0 {
        log::warn!("{}: {failed} failed trials excluded", input.display());
    }
    let rows = summarize(&trials);
    write_plot_csv(&rows, std::fs::File::create(out)?)?;
    if let Some(path) = svg {
        std::fs::write(path, write_svg(&rows))?;
    }
    Ok(rows)
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One panel per model: power against signal, one line per method with
/// ±1 standard-error whiskers.
pub fn write_svg(rows: &[PowerRow]) -> String {
    let (pw, ph, pad) = (360.0, 260.0, 40.0);
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let width = pw * models.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{ph}" font-family="sans-serif" font-size="11">"#
    );
    for (mi, model) in models.iter().enumerate() {
        let x0 = mi as f64 * pw;
        let pts: Vec<&PowerRow> = rows.iter().filter(|r| r.model == *model).collect();
        let lo = pts.iter().map(|r| r.signal).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|r| r.signal).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let sx = |v: f64| x0 + pad + (v - lo) / span * (pw - 2.0 * pad);
        let sy = |p: f64| ph - pad - p.clamp(0.0, 1.0) * (ph - 2.0 * pad);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x0 + pad,
            pad,
            pw - 2.0 * pad,
            ph - 2.0 * pad
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{model}</text>"#, x0 + pad, pad - 8.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{lo}</text><text x="{}" y="{}">{hi}</text>"#, sx(lo), ph - pad + 14.0, sx(hi) - 10.0, ph - pad + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">1</text><text x="{}" y="{}">0</text>"#, x0 + pad - 12.0, sy(1.0) + 4.0, x0 + pad - 12.0, sy(0.0) + 4.0);
        for (ki, method) in methods.iter().enumerate() {
            let colour = PALETTE[ki % PALETTE.len()];
            let line: Vec<&&PowerRow> = pts.iter().filter(|r| r.method == *method).collect();
            if line.is_empty() {
                continue;
            }
            let poly: Vec<String> = line.iter().map(|r| format!("{:.2},{:.2}", sx(r.signal), sy(r.power))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                poly.join(" ")
            );
            for r in &line {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/>"#,
                    sy(r.power - r.stderr),
                    sy(r.power + r.stderr),
                    x = sx(r.signal)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{colour}">{method}</text>"#,
                x0 + pad + 6.0,
                pad + 14.0 * (ki + 1) as f64
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
