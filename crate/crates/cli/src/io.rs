//! File formats. Trajectories are CSV with header `t,x1,...,xn`; matrices
//! are headerless CSV, one row per line.

use std::fs;
use std::path::Path;

use serde::Serialize;
use stnn_core::dynsys::Trajectory;
use stnn_core::Matrix;

use crate::error::{CliError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))
}

/// Writes the first `dims` coordinates of each state.
pub fn write_trajectory(path: &Path, times: &[f64], states: &[Vec<f64>], dims: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dims).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![t.to_string()];
        row.extend(s[..dims].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse(field: &str, path: &Path, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("{}:{line}: '{field}' is not a number", path.display())))
}

/// Reads a `t,x1,...,xn` file.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
        return Err(CliError::config(format!("{}: header must be t,x1,...,xn", path.display())));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec.iter().map(|f| parse(f, path, k + 2)).collect::<Result<Vec<_>>>()?;
        times.push(vals[0]);
        states.push(vals[1..].to_vec());
    }
    if states.is_empty() {
        return Err(CliError::config(format!("{}: no samples", path.display())));
    }
    Ok(Trajectory {
        times,
        initial_condition: states[0].clone(),
        states,
    })
}

/// Uniform sample spacing of a trajectory.
pub fn sample_interval(tr: &Trajectory) -> Result<f64> {
    if tr.times.len() < 2 {
        return Err(CliError::config("a trajectory needs at least two samples"));
    }
    let dt = (tr.times[tr.times.len() - 1] - tr.times[0]) / (tr.times.len() - 1) as f64;
    let uniform = tr.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
    if !(dt > 0.0) || !uniform {
        return Err(CliError::config("trajectory samples must be uniformly spaced in increasing time"));
    }
    Ok(dt)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Snapshot pairs: header `x1..xn,y1..yn`, one pair per row. Returns
/// `(X, X′)` with pairs as columns.
pub fn read_pairs(path: &Path) -> Result<(Matrix, Matrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 2 || width % 2 != 0 {
        return Err(CliError::config(format!("{}: header must be x1..xn,y1..yn", path.display())));
    }
    let n = width / 2;
    let mut cols = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        cols.push(rec.iter().map(|f| parse(f, path, k + 2)).collect::<Result<Vec<_>>>()?);
    }
    if cols.is_empty() {
        return Err(CliError::config(format!("{}: no pairs", path.display())));
    }
    let x = Matrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let xp = Matrix::from_fn(n, cols.len(), |i, j| cols[j][n + i]);
    Ok((x, xp))
}

pub fn write_pairs(path: &Path, x: &Matrix, xp: &Matrix) -> Result<()> {
    let n = x.rows();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for j in 0..x.cols() {
        let row = (0..n).map(|i| x[(i, j)]).chain((0..n).map(|i| xp[(i, j)]));
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let times = [0.0, 0.5, 1.0];
        let states = vec![vec![1.0, -2.0, 0.1], vec![1.5, 3.25e-7, 2.0], vec![0.0, 1.0, 1.0 / 3.0]];
        write_trajectory(&path, &times, &states, 3).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.times, times);
        assert_eq!(back.states, states);
        assert_eq!(sample_interval(&back).unwrap(), 0.5);
    }

    #[test]
    fn pairs_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let x = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let xp = Matrix::from_fn(2, 3, |i, j| -((i + j) as f64) / 7.0);
        write_pairs(&path, &x, &xp).unwrap();
        assert_eq!(read_pairs(&path).unwrap(), (x, xp));
    }

    #[test]
    fn bad_number_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "t,x1\n0,1\n0.1,abc\n").unwrap();
        assert_eq!(read_trajectory(&path).unwrap_err().exit_code(), 2);
    }
}
