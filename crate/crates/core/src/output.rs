//! Trajectory CSV files and their re-summary.

use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::keyvars::KeyVariableSeries;
use crate::simulate::{check_nonnegative, settling_time, NegativeState, Trajectory, CELSIUS_OFFSET};

pub const CSV_HEADER: [&str; 12] = [
    "t", "x1", "x2", "x3", "x4", "u", "y", "lambda", "phi1", "phi_nz", "T", "epsilon",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("key variables have {keys} samples, trajectory has {traj}")]
    Misaligned { traj: usize, keys: usize },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Value { row: usize, column: &'static str, value: String },
}

fn optional(series: Option<&Vec<f64>>, i: usize) -> String {
    series.map(|s| s[i].to_string()).unwrap_or_default()
}

/// Writes one row per sample. Floats use the shortest representation that
/// parses back to the same value; `T` (kelvin) and `epsilon` stay blank
/// without a temperature model. `y` holds the first output.
pub fn emit_csv<W: Write>(traj: &Trajectory, keys: &KeyVariableSeries, out: W) -> Result<(), CsvError> {
    if keys.t.len() != traj.len() {
        return Err(CsvError::Misaligned {
            traj: traj.len(),
            keys: keys.t.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for i in 0..traj.len() {
        let x = &traj.x[i];
        let y = traj.y.get(i).and_then(|y| y.first()).copied().unwrap_or(x[0]);
        w.write_record([
            traj.t[i].to_string(),
            x[0].to_string(),
            x[1].to_string(),
            x[2].to_string(),
            x[3].to_string(),
            traj.u[i].to_string(),
            y.to_string(),
            keys.lambda[i].to_string(),
            keys.phi1[i].to_string(),
            keys.phi_nz[i].to_string(),
            optional(traj.temperature.as_ref(), i),
            optional(traj.emissivity.as_ref(), i),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(traj: &Trajectory, keys: &KeyVariableSeries, path: &std::path::Path) -> Result<(), CsvError> {
    let file = std::fs::File::create(path)?;
    emit_csv(traj, keys, std::io::BufWriter::new(file))
}

/// Reads a file written by [`emit_csv`]. `γ` is not stored and comes back absent.
pub fn read_csv<R: Read>(input: R) -> Result<(Trajectory, KeyVariableSeries), CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(CsvError::Header(header));
    }
    let mut traj = Trajectory::default();
    let mut keys = KeyVariableSeries::default();
    let mut temperature = Vec::new();
    let mut emissivity = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let field = |col: usize| -> Result<Option<f64>, CsvError> {
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| CsvError::Value {
                row: row + 1,
                column: CSV_HEADER[col],
                value: raw.to_string(),
            })
        };
        let required = |col: usize| -> Result<f64, CsvError> {
            field(col)?.ok_or_else(|| CsvError::Value {
                row: row + 1,
                column: CSV_HEADER[col],
                value: String::new(),
            })
        };
        let t = required(0)?;
        traj.t.push(t);
        traj.x.push([required(1)?, required(2)?, required(3)?, required(4)?]);
        traj.u.push(required(5)?);
        traj.y.push(vec![required(6)?]);
        keys.t.push(t);
        keys.lambda.push(required(7)?);
        keys.phi1.push(required(8)?);
        keys.phi_nz.push(required(9)?);
        if let Some(v) = field(10)? {
            temperature.push(v);
        }
        if let Some(v) = field(11)? {
            emissivity.push(v);
        }
    }
    if !temperature.is_empty() && temperature.len() == traj.len() {
        traj.temperature = Some(temperature);
    }
    if !emissivity.is_empty() && emissivity.len() == traj.len() {
        traj.emissivity = Some(emissivity);
    }
    Ok((traj, keys))
}

/// What can be recovered from a trajectory CSV alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvSummary {
    pub samples: usize,
    pub t_end: Option<f64>,
    pub u0: Option<f64>,
    pub lambda0: Option<f64>,
    pub final_state: Option<[f64; 4]>,
    /// Days for `x1` to stay within 1% of its final value.
    pub x1_settling: Option<f64>,
    pub final_temperature_celsius: Option<f64>,
    pub initial_emissivity: Option<f64>,
    pub first_negative: Option<NegativeState>,
}

pub fn summarize(traj: &Trajectory, keys: &KeyVariableSeries) -> CsvSummary {
    let final_state = traj.x.last().copied();
    CsvSummary {
        samples: traj.len(),
        t_end: traj.t.last().copied(),
        u0: traj.u.first().copied(),
        lambda0: keys.lambda.first().copied(),
        x1_settling: final_state.and_then(|x| settling_time(traj, 0, x[0], 0.01).ok()),
        final_state,
        final_temperature_celsius: traj
            .temperature
            .as_ref()
            .and_then(|t| t.last())
            .map(|t| t - CELSIUS_OFFSET),
        initial_emissivity: traj.emissivity.as_ref().and_then(|e| e.first().copied()),
        first_negative: check_nonnegative(traj).err(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

impl fmt::Display for CsvSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples              {}", self.samples)?;
        writeln!(f, "t_end [d]            {}", opt(self.t_end))?;
        writeln!(f, "u(0) [t/d]           {}", opt(self.u0))?;
        writeln!(f, "lambda(0) [t/d]      {}", opt(self.lambda0))?;
        if let Some(x) = self.final_state {
            writeln!(f, "final x [t]          {:.6} {:.6} {:.6} {:.6}", x[0], x[1], x[2], x[3])?;
        }
        writeln!(f, "x1 settling [d]      {}", opt(self.x1_settling))?;
        writeln!(f, "final T [degC]       {}", opt(self.final_temperature_celsius))?;
        writeln!(f, "epsilon(0)           {}", opt(self.initial_emissivity))?;
        match &self.first_negative {
            None => writeln!(f, "nonnegative          yes"),
            Some(v) => writeln!(f, "nonnegative          no ({v})"),
        }
    }
}
