//! CSV outputs and the readers the later steps use to pick them back up.

use std::path::Path;

use qvsec::qv::QvPoint;

use crate::CliError;

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CURVE_HEADER: [&str; 3] = ["v_set", "q_fict_mvar", "converged"];

pub fn write_curve(path: &Path, points: &[QvPoint]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.v_set.to_string(), opt(p.q_fict), p.converged.to_string()])
        .collect();
    write_csv(path, &strings(&CURVE_HEADER), &rows)
}

pub fn read_curve(path: &Path) -> Result<Vec<QvPoint>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(CliError::Parse(format!("{}: not a Q-V curve CSV", path.display())));
    }
    let bad = |what: &str| CliError::Parse(format!("{}: bad {what}", path.display()));
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let v_set = rec[0].parse().map_err(|_| bad("v_set"))?;
        let q_fict = if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse().map_err(|_| bad("q_fict_mvar"))?)
        };
        let converged = rec[2].parse().map_err(|_| bad("converged"))?;
        points.push(QvPoint { v_set, q_fict, converged });
    }
    Ok(points)
}

/// Fixed leading columns of the scan CSV; zone columns follow.
pub const SCAN_FIXED: [&str; 7] = ["case", "branch_id", "from_bus", "to_bus", "scheme", "status", "detail"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub case: String,
    pub branch_id: usize,
    pub scheme: String,
    pub status: String,
    /// Percent delta per zone column; `None` where undefined.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub zones: Vec<String>,
    pub rows: Vec<ScanRow>,
}

pub fn read_scan(path: &Path) -> Result<ScanTable, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    let schema = || CliError::Parse(format!("{}: scan CSV schema mismatch", path.display()));
    if header.len() < SCAN_FIXED.len() || header.iter().take(SCAN_FIXED.len()).ne(SCAN_FIXED) {
        return Err(schema());
    }
    let zones: Vec<String> = header.iter().skip(SCAN_FIXED.len()).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|_| schema())?;
        if rec.len() != header.len() {
            return Err(schema());
        }
        let deltas = rec
            .iter()
            .skip(SCAN_FIXED.len())
            .map(|v| if v.is_empty() { Ok(None) } else { v.parse().map(Some).map_err(|_| schema()) })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ScanRow {
            case: rec[0].to_string(),
            branch_id: rec[1].parse().map_err(|_| schema())?,
            scheme: rec[4].to_string(),
            status: rec[5].to_string(),
            deltas,
        });
    }
    Ok(ScanTable { zones, rows })
}
