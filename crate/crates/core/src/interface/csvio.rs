//! Versioned CSV files for moment series and concentration snapshots.
//!
//! Every file starts with a `# coag-<kind> v<N>` line. Snapshots carry
//! `# key = value` metadata lines before the column header.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::ode::{MomentRecord, StateVector};

pub const MOMENTS_SCHEMA: &str = "coag-moments";
pub const SNAPSHOT_SCHEMA: &str = "coag-snapshot";
pub const SCHEMA_VERSION: u32 = 1;

pub const MOMENT_COLUMNS: [&str; 7] = [
    "t",
    "m0",
    "m1",
    "m_gl",
    "m_one_minus_lambda",
    "m2",
    "leaked_mass",
];
pub const SNAPSHOT_COLUMNS: [&str; 2] = ["n", "c_n"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing schema line, expected `# {0} v{SCHEMA_VERSION}`")]
    MissingSchema(&'static str),
    #[error("schema `{found}` does not match `{expected}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("unexpected columns {found:?}")]
    Columns { found: Vec<String> },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("metadata: {0}")]
    Metadata(String),
}

/// Round-trip float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn schema_line(kind: &str) -> String {
    format!("# {kind} v{SCHEMA_VERSION}\n")
}

/// Splits leading `#` lines from the body and checks the schema line.
fn split_header<'a>(text: &'a str, kind: &'static str) -> Result<(Vec<&'a str>, &'a str), CsvError> {
    let mut comments = Vec::new();
    let mut rest = text;
    while let Some(stripped) = rest.strip_prefix('#') {
        let (line, tail) = stripped.split_once('\n').unwrap_or((stripped, ""));
        comments.push(line.trim());
        rest = tail;
    }
    let first = comments.first().ok_or(CsvError::MissingSchema(kind))?;
    let expected = format!("{kind} v{SCHEMA_VERSION}");
    if *first != expected {
        return Err(CsvError::SchemaMismatch {
            expected,
            found: first.to_string(),
        });
    }
    Ok((comments[1..].to_vec(), rest))
}

fn read_rows(body: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != columns {
        return Err(CsvError::Columns { found });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| CsvError::Row {
                    row: i + 1,
                    msg: format!("`{s}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows(out: &mut String, columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(())
}

/// One row of `moments.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m_gl: f64,
    pub m_one_minus_lambda: f64,
    pub m2: f64,
    pub leaked_mass: f64,
}

impl From<&MomentRecord> for MomentRow {
    fn from(r: &MomentRecord) -> Self {
        Self {
            t: r.t,
            m0: r.m0,
            m1: r.m1,
            m_gl: r.m_gl,
            m_one_minus_lambda: r.m_one_minus_lambda,
            m2: r.m2,
            leaked_mass: r.leaked_mass,
        }
    }
}

pub fn moments_to_string(rows: &[MomentRow]) -> Result<String, CsvError> {
    let mut out = schema_line(MOMENTS_SCHEMA);
    write_rows(
        &mut out,
        &MOMENT_COLUMNS,
        rows.iter().map(|r| {
            [r.t, r.m0, r.m1, r.m_gl, r.m_one_minus_lambda, r.m2, r.leaked_mass]
                .iter()
                .map(|x| fmt_f64(*x))
                .collect()
        }),
    )?;
    Ok(out)
}

pub fn moments_from_str(text: &str) -> Result<Vec<MomentRow>, CsvError> {
    let (_, body) = split_header(text, MOMENTS_SCHEMA)?;
    Ok(read_rows(body, &MOMENT_COLUMNS)?
        .into_iter()
        .map(|v| MomentRow {
            t: v[0],
            m0: v[1],
            m1: v[2],
            m_gl: v[3],
            m_one_minus_lambda: v[4],
            m2: v[5],
            leaked_mass: v[6],
        })
        .collect())
}

pub fn write_moments(path: &Path, rows: &[MomentRow]) -> Result<(), CsvError> {
    fs::write(path, moments_to_string(rows)?)?;
    Ok(())
}

pub fn read_moments(path: &Path) -> Result<Vec<MomentRow>, CsvError> {
    moments_from_str(&fs::read_to_string(path)?)
}

/// All bins are written, zeros included, so that a snapshot restores the state exactly.
pub fn snapshot_to_string(state: &StateVector) -> Result<String, CsvError> {
    let mut out = schema_line(SNAPSHOT_SCHEMA);
    for (k, v) in [
        ("t", state.t),
        ("leaked_mass", state.leaked_mass),
        ("leaked_number", state.leaked_number),
    ] {
        out.push_str(&format!("# {k} = {}\n", fmt_f64(v)));
    }
    write_rows(
        &mut out,
        &SNAPSHOT_COLUMNS,
        state
            .c
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), fmt_f64(*c)]),
    )?;
    Ok(out)
}

pub fn snapshot_from_str(text: &str) -> Result<StateVector, CsvError> {
    let (meta, body) = split_header(text, SNAPSHOT_SCHEMA)?;
    let mut state = StateVector::empty(0);
    let mut seen_t = false;
    for line in meta {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CsvError::Metadata(line.to_string()))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CsvError::Metadata(line.to_string()))?;
        match k.trim() {
            "t" => {
                state.t = v;
                seen_t = true;
            }
            "leaked_mass" => state.leaked_mass = v,
            "leaked_number" => state.leaked_number = v,
            other => return Err(CsvError::Metadata(format!("unknown key `{other}`"))),
        }
    }
    if !seen_t {
        return Err(CsvError::Metadata("missing `t`".into()));
    }
    for (i, row) in read_rows(body, &SNAPSHOT_COLUMNS)?.into_iter().enumerate() {
        if row[0] != (i + 1) as f64 {
            return Err(CsvError::Row {
                row: i + 1,
                msg: format!("size {} out of sequence", row[0]),
            });
        }
        state.c.push(row[1]);
    }
    Ok(state)
}

pub fn write_snapshot(path: &Path, state: &StateVector) -> Result<(), CsvError> {
    fs::write(path, snapshot_to_string(state)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<StateVector, CsvError> {
    snapshot_from_str(&fs::read_to_string(path)?)
}

/// `snapshot_<t>.csv` with `t` in round-trip format.
pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{}.csv", fmt_f64(t))
}
