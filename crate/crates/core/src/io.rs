//! Measure, plan and trace files.
//!
//! Measure CSV starts with `# d=<dim> n=<count> weighted=<0|1>` and has one
//! row `x1,...,xd[,w]` per atom. A file without that header is read as a
//! plain table: an optional row of column names, then coordinates only,
//! with uniform weights. Floats are written in shortest round-trip form, so
//! reading a written file gives back the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barycenter::{BarycenterResult, StepRecord};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::plan::TransportPlan;

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a measure; `.json` files use the JSON layout, anything else CSV.
pub fn read_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let path = path.as_ref();
    let text = read_text(path)?;
    if is_json(path) {
        parse_measure_json(&text)
    } else {
        parse_measure_csv(&text, path)
    }
}

/// Writes a measure; `.json` files use the JSON layout, anything else CSV.
pub fn write_measure(path: impl AsRef<Path>, m: &DiscreteMeasure) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        measure_to_json(m)?
    } else {
        measure_to_csv(m)
    };
    write_text(path, &text)
}

pub fn measure_to_json(m: &DiscreteMeasure) -> Result<String> {
    let doc = MeasureJson {
        dim: m.dim(),
        points: m.points().outer_iter().map(|r| r.to_vec()).collect(),
        weights: m.weights().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn parse_measure_json(text: &str) -> Result<DiscreteMeasure> {
    let doc: MeasureJson = serde_json::from_str(text)?;
    if let Some(row) = doc.points.iter().position(|p| p.len() != doc.dim) {
        return Err(Error::DimensionMismatch {
            expected: doc.dim,
            found: doc.points[row].len(),
        });
    }
    DiscreteMeasure::from_rows(&doc.points, Some(doc.weights))
}

pub fn measure_to_csv(m: &DiscreteMeasure) -> String {
    let n = m.len();
    let uniform = m.weights().iter().all(|&w| w == 1.0 / n as f64);
    let mut out = format!("# d={} n={} weighted={}\n", m.dim(), n, u8::from(!uniform));
    for (p, w) in m.points().outer_iter().zip(m.weights()) {
        let mut first = true;
        for v in p.iter().chain((!uniform).then_some(w)) {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v:?}").expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

struct Header {
    dim: usize,
    count: usize,
    weighted: bool,
}

fn parse_header(line: &str, path: &Path) -> Result<Header> {
    let fail = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        column: 1,
        message,
    };
    let (mut dim, mut count, mut weighted) = (None, None, None);
    for field in line.trim_start_matches('#').split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| fail(format!("expected key=value, found {field:?}")))?;
        let value: usize = value
            .parse()
            .map_err(|_| fail(format!("{key} must be a nonnegative integer")))?;
        match key {
            "d" => dim = Some(value),
            "n" => count = Some(value),
            "weighted" if value <= 1 => weighted = Some(value == 1),
            _ => return Err(fail(format!("unexpected header field {field:?}"))),
        }
    }
    match (dim, count, weighted) {
        (Some(dim), Some(count), Some(weighted)) if dim > 0 => Ok(Header {
            dim,
            count,
            weighted,
        }),
        _ => Err(fail("header must define d>0, n and weighted".into())),
    }
}

/// Parses measure CSV text; `path` only labels errors.
pub fn parse_measure_csv(text: &str, path: &Path) -> Result<DiscreteMeasure> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut header = None;
    let mut pending = None;
    for (no, line) in lines.by_ref() {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            header = Some(parse_header(line, path).map_err(|e| match e {
                Error::Parse { column, message, .. } => err(no, column, message),
                other => other,
            })?);
            break;
        }
        // headerless table: skip one row of column names
        let named = line
            .split(',')
            .next()
            .is_some_and(|t| t.trim().parse::<f64>().is_err());
        if !named {
            pending = Some((no, line));
        }
        break;
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let expected = header.as_ref().map(|h| h.dim + usize::from(h.weighted));
    let mut width = expected;
    for (no, line) in pending.into_iter().chain(lines) {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut values = Vec::new();
        for (col, token) in line.split(',').enumerate() {
            let v: f64 = token
                .trim()
                .parse()
                .map_err(|_| err(no, col + 1, format!("cannot parse {:?} as a number", token.trim())))?;
            if !v.is_finite() {
                return Err(err(no, col + 1, "non-finite value".into()));
            }
            values.push(v);
        }
        let want = *width.get_or_insert(values.len());
        if values.len() != want {
            return Err(err(
                no,
                want.min(values.len()) + 1,
                format!("expected {want} fields, found {}", values.len()),
            ));
        }
        if header.as_ref().is_some_and(|h| h.weighted) {
            weights.push(values.pop().expect("weighted rows have a last field"));
        }
        rows.push(values);
    }
    if let Some(h) = &header {
        if rows.len() != h.count {
            return Err(err(1, 1, format!("header declares n={} but found {} rows", h.count, rows.len())));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySupport);
    }
    let weights = header.as_ref().is_some_and(|h| h.weighted).then_some(weights);
    DiscreteMeasure::from_rows(&rows, weights)
}

/// Writes the plan matrix as CSV, one row per source atom.
pub fn write_plan(path: impl AsRef<Path>, plan: &TransportPlan) -> Result<()> {
    let (r, m) = plan.shape();
    let mut out = format!("# rows={r} cols={m}\n");
    for row in plan.matrix().outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// Serialized iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub algorithm: String,
    pub provider: String,
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub population_energy_estimate: Option<f64>,
}

impl TraceFile {
    pub fn new(algorithm: &str, result: &BarycenterResult) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            provider: result.provider.to_string(),
            steps: result.steps.clone(),
            converged: result.converged,
            iterations: result.iterations,
            population_energy_estimate: result.population_energy_estimate,
        }
    }
}

pub fn write_trace(path: impl AsRef<Path>, algorithm: &str, result: &BarycenterResult) -> Result<()> {
    let text = serde_json::to_string_pretty(&TraceFile::new(algorithm, result))?;
    write_text(path.as_ref(), &text)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceFile> {
    Ok(serde_json::from_str(&read_text(path.as_ref())?)?)
}

/// Files matching a glob pattern, sorted by path.
pub fn glob_paths(pattern: &str) -> Result<Vec<PathBuf>> {
    let entries = glob::glob(pattern).map_err(|e| Error::InvalidConfig(format!("bad pattern {pattern:?}: {e}")))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| { let p = e.path().to_path_buf(); Error::io(p, e.into()) })?;
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Measures read one at a time as the iterator advances.
pub fn measure_stream(paths: Vec<PathBuf>) -> impl Iterator<Item = Result<DiscreteMeasure>> {
    paths.into_iter().map(read_measure)
}
