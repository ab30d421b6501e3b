//! Trajectory data: CSV ingestion, Kalman smoothing, windowing, splits and a
//! synthetic multi-subject generator.
//!
//! Positions are centimetres throughout; velocities are centimetres per
//! frame.

mod csv_io;
mod smooth;
mod split;
mod synth;
mod window;

use serde::{Deserialize, Serialize};

use crate::numeric::Tensor;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvError, CSV_COLUMNS};
pub use smooth::{kalman_smooth, SmoothingConfig};
pub use split::{assign_trials, split, Dataset, ManifestEntry, SplitManifest, SplitScheme, SplitTag};
pub use synth::{
    goal_position, min_jerk, reach_duration, synth_generate, SubjectProfile, BASE_REACH_FRAMES, HOME, N_ACTIONS,
    RETRACTION_ACTION, TAKE_ACTIONS,
};
pub use window::{compute_velocities, prepare_windows, window, M_FUTURE, N_PAST};

pub const NOMINAL_RATE_HZ: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t_index: u64,
    pub pos: [f64; 3],
}

/// One recorded reach of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrajectory {
    pub subject_id: String,
    pub trial_id: String,
    /// 1..=12
    pub action_id: usize,
    pub frames: Vec<Frame>,
}

impl RawTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSource {
    pub subject: String,
    pub trial: String,
    pub start: usize,
}

/// One sample: past positions and velocities, the future positions that
/// follow them and the trial's intent label.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryWindow {
    /// `[n × 6]`: x, y, z (cm), vx, vy, vz (cm/frame)
    pub inputs: Tensor,
    /// `[m × 3]` (cm)
    pub target: Tensor,
    /// 1-based intent id
    pub label: usize,
    pub source: WindowSource,
}
