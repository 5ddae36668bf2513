//! JSON and CSV formats: systems, frequency data, margin reports, traces and sweeps.
//!
//! Matrices are row-major nested arrays. An empty array takes its shape from the other
//! matrices (e.g. `"A": []` with a `1x1` `"D"` is a static gain).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_sim::{DelayBracket, SimTrace};
use crate::linalg::CMatrix;
use crate::loewner::FrequencyDataSet;
use crate::lti::{ContinuousStateSpace, DiscreteStateSpace};
use crate::margin::MarginReport;
use crate::pipeline::SweepRow;

#[derive(Clone, Debug, PartialEq)]
pub enum System {
    Continuous(ContinuousStateSpace),
    Discrete(DiscreteStateSpace),
}

impl System {
    pub fn kind(&self) -> &'static str {
        match self {
            System::Continuous(_) => "continuous",
            System::Discrete(_) => "discrete",
        }
    }

    pub fn into_continuous(self) -> Result<ContinuousStateSpace> {
        match self {
            System::Continuous(s) => Ok(s),
            System::Discrete(_) => Err(Error::InvalidData("expected a continuous system, got discrete".into())),
        }
    }

    pub fn into_discrete(self) -> Result<DiscreteStateSpace> {
        match self {
            System::Discrete(s) => Ok(s),
            System::Continuous(_) => Err(Error::InvalidData("expected a discrete system, got continuous".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemJson {
    kind: String,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Rows to a matrix; `rows`/`cols` fill in the shape of an empty array.
fn from_rows(name: &str, rows: &[Vec<f64>], nrows: Option<usize>, ncols: Option<usize>) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows.iter().all(|r| r.is_empty()) {
        let r = if rows.is_empty() { nrows.unwrap_or(0) } else { rows.len() };
        return Ok(DMatrix::zeros(r, ncols.unwrap_or(0)));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Parse(format!("{name}: row {i} has {} entries, row 0 has {width}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn parse_system(text: &str) -> Result<System> {
    let js: SystemJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("system JSON: {e}")))?;
    let d = from_rows("D", &js.d, None, None)?;
    let (p, m) = d.shape();
    let a_rows = js.a.len();
    let n = if a_rows > 0 { a_rows } else { js.b.len().max(js.c.first().map_or(0, |r| r.len())) };
    let a = from_rows("A", &js.a, Some(n), Some(n))?;
    let b = from_rows("B", &js.b, Some(n), Some(m))?;
    let c = from_rows("C", &js.c, Some(p), Some(n))?;
    match js.kind.as_str() {
        "continuous" => {
            if js.h.is_some() {
                return Err(Error::Parse("continuous system must not carry \"h\"".into()));
            }
            let sys = match js.e {
                Some(e) => ContinuousStateSpace::descriptor(from_rows("E", &e, Some(n), Some(n))?, a, b, c, d)?,
                None => ContinuousStateSpace::new(a, b, c, d)?,
            };
            Ok(System::Continuous(sys))
        }
        "discrete" => {
            if js.e.is_some() {
                return Err(Error::Parse("discrete system must not carry \"E\"".into()));
            }
            let h = js.h.ok_or_else(|| Error::Parse("discrete system needs \"h\"".into()))?;
            Ok(System::Discrete(DiscreteStateSpace::new(a, b, c, d, h)?))
        }
        other => Err(Error::Parse(format!("unknown system kind {other:?}"))),
    }
}

pub fn system_to_json(sys: &System) -> String {
    let js = match sys {
        System::Continuous(s) => SystemJson {
            kind: "continuous".into(),
            e: s.is_descriptor().then(|| to_rows(s.e())),
            a: to_rows(s.a()),
            b: to_rows(s.b()),
            c: to_rows(s.c()),
            d: to_rows(s.d()),
            h: None,
        },
        System::Discrete(s) => SystemJson {
            kind: "discrete".into(),
            e: None,
            a: to_rows(s.a()),
            b: to_rows(s.b()),
            c: to_rows(s.c()),
            d: to_rows(s.d()),
            h: Some(s.h()),
        },
    };
    serde_json::to_string_pretty(&js).expect("plain data serializes")
}

pub fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn read_system(path: &Path) -> Result<System> {
    parse_system(&read_text(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse(format!("CSV line {}: {e}", p.line())),
        None => Error::Parse(format!("CSV: {e}")),
    }
}

pub fn write_frequency_csv<W: Write>(data: &FrequencyDataSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let siso = data.outputs() == 1 && data.inputs() == 1;
    if siso {
        w.write_record(["omega_rad_s", "re", "im"]).map_err(csv_error)?;
    } else {
        w.write_record(["omega_rad_s", "out", "in", "re", "im"]).map_err(csv_error)?;
    }
    for (&om, v) in data.omegas().iter().zip(data.values()) {
        if siso {
            w.serialize((om, v[(0, 0)].re, v[(0, 0)].im)).map_err(csv_error)?;
        } else {
            for i in 0..v.nrows() {
                for j in 0..v.ncols() {
                    w.serialize((om, i, j, v[(i, j)].re, v[(i, j)].im)).map_err(csv_error)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_frequency_csv<R: Read>(input: R, h: Option<f64>) -> Result<FrequencyDataSet> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    let mimo = match cols.as_slice() {
        ["omega_rad_s", "re", "im"] => false,
        ["omega_rad_s", "out", "in", "re", "im"] => true,
        _ => {
            return Err(Error::Parse(format!(
                "CSV line 1: header must be omega_rad_s,re,im or omega_rad_s,out,in,re,im, got {}",
                cols.join(",")
            )))
        }
    };
    let mut entries: Vec<(f64, usize, usize, Complex64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            rec.get(i).map(str::trim).ok_or_else(|| Error::Parse(format!("CSV line {line}: missing field {}", cols[i])))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse::<f64>().map_err(|e| Error::Parse(format!("CSV line {line}, field {}: {e}", cols[i])))
        };
        let idx = |i: usize| -> Result<usize> {
            field(i)?.parse::<usize>().map_err(|e| Error::Parse(format!("CSV line {line}, field {}: {e}", cols[i])))
        };
        if mimo {
            entries.push((num(0)?, idx(1)?, idx(2)?, Complex64::new(num(3)?, num(4)?)));
        } else {
            entries.push((num(0)?, 0, 0, Complex64::new(num(1)?, num(2)?)));
        }
    }
    let p = entries.iter().map(|e| e.1 + 1).max().unwrap_or(1);
    let m = entries.iter().map(|e| e.2 + 1).max().unwrap_or(1);
    let mut omegas: Vec<f64> = Vec::new();
    let mut values: Vec<CMatrix> = Vec::new();
    let mut filled: Vec<usize> = Vec::new();
    for (om, i, j, z) in entries {
        if omegas.last() != Some(&om) {
            omegas.push(om);
            values.push(CMatrix::zeros(p, m));
            filled.push(0);
        }
        let k = values.len() - 1;
        values[k][(i, j)] = z;
        filled[k] += 1;
    }
    if let Some(k) = filled.iter().position(|&f| f != p * m) {
        return Err(Error::Parse(format!("frequency {} has {} of {} entries", omegas[k], filled[k], p * m)));
    }
    FrequencyDataSet::new(omegas, values, h)
}

#[derive(Serialize)]
struct CrossoverJson {
    omega: f64,
    pm_rad: f64,
    dm_s: f64,
    above_nyquist: bool,
}

#[derive(Serialize)]
struct GainMarginJson {
    omega: f64,
    gm: f64,
}

#[derive(Serialize)]
struct ReportJson {
    dm_seconds: Option<f64>,
    stable_nominal: bool,
    crossovers: Vec<CrossoverJson>,
    gain_margins: Vec<GainMarginJson>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Margin report as a JSON value; an infinite margin is written as `null`.
pub fn report_value(r: &MarginReport) -> serde_json::Value {
    let js = ReportJson {
        dm_seconds: finite(r.delay_margin),
        stable_nominal: r.stable_nominal,
        crossovers: r
            .crossovers
            .iter()
            .map(|c| CrossoverJson { omega: c.omega, pm_rad: c.pm_rad, dm_s: c.dm_s, above_nyquist: c.above_nyquist })
            .collect(),
        gain_margins: r.gain_margins.iter().map(|g| GainMarginJson { omega: g.omega, gm: g.gm }).collect(),
    };
    serde_json::to_value(js).expect("plain data serializes")
}

pub fn report_to_json(r: &MarginReport) -> String {
    serde_json::to_string_pretty(&report_value(r)).expect("plain data serializes")
}

pub fn write_trace_csv<W: Write>(tr: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "y", "u"]).map_err(csv_error)?;
    for ((t, y), u) in tr.times.iter().zip(&tr.outputs).zip(&tr.controls) {
        w.serialize((t, y, u)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Classified {
    tau: f64,
    class: String,
}

#[derive(Serialize)]
struct BracketJson {
    tau_lo: f64,
    tau_hi: f64,
    tol: f64,
    classified_at: Vec<Classified>,
}

pub fn bracket_to_json(b: &DelayBracket) -> String {
    let js = BracketJson {
        tau_lo: b.tau_lo,
        tau_hi: b.tau_hi,
        tol: b.tol,
        classified_at: b.classified_at.iter().map(|(t, s)| Classified { tau: *t, class: s.to_string() }).collect(),
    };
    serde_json::to_string_pretty(&js).expect("plain data serializes")
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "h", "dm_hsdma", "dm_sim", "order", "stable_nominal", "interpolation_error", "status"])
        .map_err(csv_error)?;
    for r in rows {
        w.serialize((
            r.method.name(),
            r.h,
            r.dm_hsdma,
            r.dm_sim,
            r.order,
            r.stable_nominal,
            r.interpolation_error,
            &r.status,
        ))
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `h,continuous,forward,backward,bilinear`; missing values are empty fields.
pub fn write_plot_csv<W: Write>(table: &[(f64, f64, [Option<f64>; 3])], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "continuous", "forward", "backward", "bilinear"]).map_err(csv_error)?;
    for (h, c, [f, b, t]) in table {
        w.serialize((h, c, f, b, t)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
