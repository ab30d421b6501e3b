use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{Frame, RawTrajectory, N_ACTIONS};

pub const CSV_COLUMNS: [&str; 7] = ["subject_id", "trial_id", "action_id", "frame", "x_cm", "y_cm", "z_cm"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing header column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unknown action id {action} (expected 1..={N_ACTIONS})")]
    UnknownAction { line: u64, action: i64 },
    #[error("line {line}: frame {frame} does not follow frame {previous} of {subject}/{trial}")]
    NonMonotone {
        line: u64,
        subject: String,
        trial: String,
        frame: u64,
        previous: u64,
    },
}

impl CsvError {
    pub fn is_io(&self) -> bool {
        matches!(self, CsvError::Io { .. })
    }
}

#[derive(Deserialize)]
struct Row {
    subject_id: String,
    trial_id: String,
    action_id: i64,
    frame: i64,
    x_cm: f64,
    y_cm: f64,
    z_cm: f64,
}

fn malformed(line: u64, message: impl Into<String>) -> CsvError {
    CsvError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses trajectory CSV. Rows are grouped by (subject, trial, action) in
/// order of first appearance; extra columns are ignored.
pub fn read_csv(input: impl Read) -> Result<Vec<RawTrajectory>, CsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, format!("unreadable header: {e}")))?
        .clone();
    for col in CSV_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(CsvError::MissingColumn(col));
        }
    }

    let mut out: Vec<RawTrajectory> = Vec::new();
    let mut index: HashMap<(String, String, usize), usize> = HashMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(line, e.to_string()))?;
        if !(1..=N_ACTIONS as i64).contains(&row.action_id) {
            return Err(CsvError::UnknownAction {
                line,
                action: row.action_id,
            });
        }
        if row.frame < 0 {
            return Err(malformed(line, format!("negative frame index {}", row.frame)));
        }
        let pos = [row.x_cm, row.y_cm, row.z_cm];
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(malformed(line, "non-finite coordinate"));
        }
        let action = row.action_id as usize;
        let frame = row.frame as u64;
        let key = (row.subject_id, row.trial_id, action);
        let slot = match index.get(&key) {
            Some(&i) => i,
            None => {
                out.push(RawTrajectory {
                    subject_id: key.0.clone(),
                    trial_id: key.1.clone(),
                    action_id: action,
                    frames: Vec::new(),
                });
                index.insert(key, out.len() - 1);
                out.len() - 1
            }
        };
        let traj = &mut out[slot];
        if let Some(last) = traj.frames.last() {
            if frame <= last.t_index {
                return Err(CsvError::NonMonotone {
                    line,
                    subject: traj.subject_id.clone(),
                    trial: traj.trial_id.clone(),
                    frame,
                    previous: last.t_index,
                });
            }
        }
        traj.frames.push(Frame { t_index: frame, pos });
    }
    Ok(out)
}

pub fn load_csv(path: &Path) -> Result<Vec<RawTrajectory>, CsvError> {
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes trajectories in the canonical column order. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(trajectories: &[RawTrajectory], out: impl Write) -> std::io::Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    writer.write_record(CSV_COLUMNS)?;
    for t in trajectories {
        for f in &t.frames {
            writer.write_record([
                t.subject_id.clone(),
                t.trial_id.clone(),
                t.action_id.to_string(),
                f.t_index.to_string(),
                f.pos[0].to_string(),
                f.pos[1].to_string(),
                f.pos[2].to_string(),
            ])?;
        }
    }
    writer.flush()
}

pub fn save_csv(trajectories: &[RawTrajectory], path: &Path) -> Result<(), CsvError> {
    let io_err = |source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(trajectories, std::io::BufWriter::new(file)).map_err(io_err)
}
