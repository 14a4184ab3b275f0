//! Text formats: trace CSV, matrix dumps and gain files.
//!
//! Trace columns, in order: `k,i,rho_a,rho_b,q_a,q_b,eps_cmd,eps_applied_a,eps_applied_b`.
//! `k` runs over `0..=K` and `i` over sections `1..=n`. Densities are the
//! instantaneous values at step `k`; flows and sharing factors are those
//! acting on `[k, k+1)`, so they are left empty on the final row.
//!
//! Gain files carry `# key=value` metadata lines followed by the `n x 4n`
//! matrix `K = [K1, K2]`, one comma-separated row per line.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::ctm::SimulationTrace;
use crate::design::{GainMeta, GainSet};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 9] = [
    "k",
    "i",
    "rho_a",
    "rho_b",
    "q_a",
    "q_b",
    "eps_cmd",
    "eps_applied_a",
    "eps_applied_b",
];

/// `%.9g`-style formatting.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_fraction(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_fraction(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let n = trace.n_sections();
    let steps = trace.steps();
    let f = |v: f64| fmt_sig(v, 9);
    for k in 0..=steps {
        for i in 0..n {
            let mut row = vec![
                k.to_string(),
                (i + 1).to_string(),
                f(trace.rho_a[k][i]),
                f(trace.rho_b[k][i]),
            ];
            if k < steps {
                row.extend([
                    f(trace.q_a[k][i]),
                    f(trace.q_b[k][i]),
                    f(trace.eps_cmd[k][i]),
                    f(trace.eps_a[k][i]),
                    f(trace.eps_b[k][i]),
                ]);
            } else {
                row.extend(std::iter::repeat_n(String::new(), 5));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Comma-separated rows, shortest round-trip float text.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, out: &mut W) -> Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]; blank and `#` lines are skipped.
pub fn read_matrix<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}: {s:?}", no + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, got {}",
                    no + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn write_gains<W: Write>(gains: &GainSet, out: &mut W) -> Result<()> {
    let m = &gains.meta;
    writeln!(out, "# gain matrix K = [K1, K2]")?;
    writeln!(out, "# sigma={}", m.sigma)?;
    writeln!(out, "# p1={}", m.p1)?;
    writeln!(out, "# p2={}", m.p2)?;
    writeln!(out, "# n={}", m.n)?;
    writeln!(out, "# m={}", m.m)?;
    writeln!(out, "# iterations={}", m.iterations)?;
    writeln!(out, "# residual={}", m.residual)?;
    write_matrix(&gains.k, out)
}

pub fn read_gains<R: BufRead>(mut input: R) -> Result<GainSet> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut meta = std::collections::HashMap::new();
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let get = |key: &str| -> Result<&String> {
        meta.get(key)
            .ok_or_else(|| Error::Parse(format!("gain file is missing `{key}`")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("`{key}`: {e}")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("`{key}`: {e}")))
    };
    let meta = GainMeta {
        sigma: num("sigma")?,
        p1: num("p1")?,
        p2: num("p2")?,
        n: int("n")?,
        m: int("m")?,
        iterations: int("iterations")?,
        residual: num("residual")?,
    };
    let k = read_matrix(text.as_bytes())?;
    if k.nrows() != meta.n {
        return Err(Error::Parse(format!(
            "header says n={}, matrix has {} rows",
            meta.n,
            k.nrows()
        )));
    }
    GainSet::from_full(k, meta).map_err(|e| Error::Parse(e.to_string()))
}
