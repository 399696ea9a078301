use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{Snapshot, Trajectory};
use crate::model::FunctionalSnapshot;

use super::HarnessError;

pub const TRAJECTORY_SCHEMA: &str = "# blowup-lab trajectory schema v1";
pub const TRAJECTORY_COLUMNS: [&str; 9] = ["t", "dt", "H", "J", "I", "G", "norm_p", "norm_grad", "weighted_l2"];

/// Shortest representation that parses back to the same `f64`.
fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    writeln!(file, "{TRAJECTORY_SCHEMA}").map_err(|e| HarnessError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(TRAJECTORY_COLUMNS).map_err(|e| HarnessError::csv(path, e))?;
    for s in &traj.snapshots {
        let f = &s.functionals;
        let row = [f.t, s.dt, f.weighted_energy, f.energy, f.nehari, f.gap, f.norm_p, f.norm_grad, f.weighted_l2];
        writer
            .write_record(row.iter().map(|&x| fmt(x)))
            .map_err(|e| HarnessError::csv(path, e))?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads snapshots written by [`write_trajectory_csv`]; the accumulated
/// integrals are not part of the file and come back as `None`.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Snapshot>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| HarnessError::io(path, e))?;
    if first.trim_end() != TRAJECTORY_SCHEMA {
        return Err(HarnessError::Input(format!(
            "{}: expected schema line {TRAJECTORY_SCHEMA:?}",
            path.display()
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers().map_err(|e| HarnessError::csv(path, e))?;
    if header.iter().ne(TRAJECTORY_COLUMNS) {
        return Err(HarnessError::Input(format!("{}: unexpected columns", path.display())));
    }
    let mut snapshots = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| HarnessError::csv(path, e))?;
        let values: Vec<f64> = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::Input(format!("{}: row {}: {e}", path.display(), line + 1)))?;
        if values.len() != TRAJECTORY_COLUMNS.len() {
            return Err(HarnessError::Input(format!("{}: row {} has {} fields", path.display(), line + 1, values.len())));
        }
        snapshots.push(Snapshot {
            dt: values[1],
            functionals: FunctionalSnapshot {
                t: values[0],
                weighted_energy: values[2],
                energy: values[3],
                nehari: values[4],
                gap: values[5],
                norm_p: values[6],
                norm_grad: values[7],
                weighted_l2: values[8],
            },
            dissipation: None,
            nehari_integral: None,
        });
    }
    if snapshots.is_empty() {
        return Err(HarnessError::Input(format!("{}: no snapshots", path.display())));
    }
    Ok(snapshots)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}
