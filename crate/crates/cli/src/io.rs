//! CSV and JSON file helpers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ccar3::graph::{knn_graph, GraphStructure};
use ccar3::Mat;
use serde::Serialize;

use crate::error::CliError;

/// Reads a headerless numeric CSV into a dense matrix.
pub fn read_matrix(path: &Path) -> Result<Mat, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        match ncols {
            None => ncols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(CliError::Input(format!(
                    "{}: row {} has {} fields, expected {c}",
                    path.display(),
                    i + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {}, column {}: '{field}' is not a number",
                    path.display(),
                    i + 1,
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {}, column {} is not finite",
                    path.display(),
                    i + 1,
                    j + 1
                )));
            }
            values.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(CliError::Input(format!("{} holds no data", path.display())));
    }
    Ok(Mat::from_row_slice(nrows, ncols, &values))
}

/// Writes a matrix as headerless CSV. `f64` display is the shortest string
/// that parses back to the same value.
pub fn write_matrix(path: &Path, m: &Mat) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Edge list with a `src,dst` header and 1-based node indices.
pub fn read_edges(path: &Path, p: usize) -> Result<GraphStructure, CliError> {
    #[derive(serde::Deserialize)]
    struct Edge {
        src: usize,
        dst: usize,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut edges = Vec::new();
    for (i, record) in reader.deserialize::<Edge>().enumerate() {
        let e = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if e.src == 0 || e.dst == 0 {
            return Err(CliError::Input(format!(
                "{}: edge {} uses index 0, indices are 1-based",
                path.display(),
                i + 1
            )));
        }
        edges.push((e.src - 1, e.dst - 1));
    }
    Ok(GraphStructure::new(p, &edges)?)
}

/// k-nearest-neighbour graph over the rows of a headerless coordinate CSV.
pub fn read_knn(path: &Path, k: usize, p: usize) -> Result<GraphStructure, CliError> {
    let coords = read_matrix(path)?;
    if coords.nrows() != p {
        return Err(CliError::Input(format!(
            "{} has {} points, X has {p} columns",
            path.display(),
            coords.nrows()
        )));
    }
    let points: Vec<Vec<f64>> = coords.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(knn_graph(&points, k)?)
}

/// One integer group label per covariate, one per line.
pub fn read_labels(path: &Path) -> Result<Vec<i64>, CliError> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::Input(format!("{} must hold one label per line", path.display())));
    }
    m.iter()
        .map(|&v| {
            if v.fract() == 0.0 {
                Ok(v as i64)
            } else {
                Err(CliError::Input(format!("{}: label {v} is not an integer", path.display())))
            }
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json_value(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
