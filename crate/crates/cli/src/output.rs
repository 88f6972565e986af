//! File and stdout writers. Every JSON document ends with a newline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use qsteer::fitquad::PointCloud;
use qsteer::tomosim::PartyCloud;
use serde::Serialize;

use crate::CliError;

pub const CLOUD_HEADER: [&str; 9] = ["dir_x", "dir_y", "dir_z", "bx", "by", "bz", "err_x", "err_y", "err_z"];

pub fn json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let s = json_string(value)?;
    std::io::stdout().lock().write_all(s.as_bytes())?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, json_string(value)?)?;
    Ok(path)
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Input(format!("{other:?}")),
    }
}

/// Writes rows of plain numbers (or labels) under `header`.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_csv(fs::File::create(path)?, header, rows)
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn cloud_rows(cloud: &PartyCloud) -> Vec<Vec<String>> {
    cloud
        .points
        .iter()
        .map(|p| {
            let d = p.direction;
            let b = p.estimate.bloch_hat;
            let e = p.estimate.stderr;
            [d.x, d.y, d.z, b.x, b.y, b.z, e.x, e.y, e.z]
                .into_iter()
                .map(num)
                .collect()
        })
        .collect()
}

/// Reads the Bloch-vector columns of a point-cloud CSV. Files with only
/// `x,y,z` columns are accepted too. When `err_x,err_y,err_z` are present the
/// mean per-component squared error is returned alongside.
pub fn read_cloud(path: &Path) -> Result<(PointCloud, Option<f64>), CliError> {
    let file = fs::File::open(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = r.headers().map_err(csv_error)?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let idx = match (column(&["bx", "x"]), column(&["by", "y"]), column(&["bz", "z"])) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => {
            return Err(CliError::Input(format!(
                "{}: need columns bx,by,bz (or x,y,z)",
                path.display()
            )))
        }
    };
    let err_idx = match (column(&["err_x"]), column(&["err_y"]), column(&["err_z"])) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    let mut points = Vec::new();
    let mut sq_err = 0.0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let field = |i: usize| -> Result<f64, CliError> {
            let f = rec.get(i).unwrap_or("");
            f.parse()
                .map_err(|_| CliError::Input(format!("{}: row {}: bad number {f:?}", path.display(), line + 2)))
        };
        points.push(Vector3::new(field(idx[0])?, field(idx[1])?, field(idx[2])?));
        if let Some(e) = err_idx {
            sq_err += (field(e[0])?.powi(2) + field(e[1])?.powi(2) + field(e[2])?.powi(2)) / 3.0;
        }
    }
    let noise = err_idx
        .filter(|_| !points.is_empty())
        .map(|_| sq_err / points.len() as f64);
    Ok((PointCloud::new(points), noise))
}
