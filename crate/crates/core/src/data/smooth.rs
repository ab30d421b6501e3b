use serde::{Deserialize, Serialize};

use super::RawTrajectory;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Acceleration noise, cm/frame².
    pub process_std: f64,
    /// Position measurement noise, cm.
    pub measurement_std: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            process_std: 0.2,
            measurement_std: 0.5,
        }
    }
}

/// Causal constant-velocity Kalman filter run independently on x, y and z.
///
/// State is (position, velocity) with `F = [[1,1],[0,1]]` and white
/// acceleration noise entering through `G = [½, 1]`. The filter starts at the
/// first measurement with zero velocity and variance `R` on both components.
pub fn kalman_smooth(traj: &RawTrajectory, cfg: SmoothingConfig) -> Result<RawTrajectory> {
    if !(cfg.process_std > 0.0 && cfg.process_std.is_finite()) {
        return Err(Error::Config(format!("process_std must be positive, got {}", cfg.process_std)));
    }
    if !(cfg.measurement_std > 0.0 && cfg.measurement_std.is_finite()) {
        return Err(Error::Config(format!(
            "measurement_std must be positive, got {}",
            cfg.measurement_std
        )));
    }
    if traj.frames.len() < 2 {
        return Err(Error::Config(format!(
            "smoothing needs at least 2 frames, {}/{} has {}",
            traj.subject_id,
            traj.trial_id,
            traj.frames.len()
        )));
    }
    let q = cfg.process_std * cfg.process_std;
    let (q00, q01, q11) = (0.25 * q, 0.5 * q, q);
    let r = cfg.measurement_std * cfg.measurement_std;

    let mut out = traj.clone();
    for axis in 0..3 {
        let mut x = [traj.frames[0].pos[axis], 0.0];
        let mut p = [[r, 0.0], [0.0, r]];
        for frame in out.frames.iter_mut().skip(1) {
            // predict
            x = [x[0] + x[1], x[1]];
            let p00 = p[0][0] + p[0][1] + p[1][0] + p[1][1] + q00;
            let p01 = p[0][1] + p[1][1] + q01;
            let p10 = p[1][0] + p[1][1] + q01;
            let p11 = p[1][1] + q11;
            // update
            let s = p00 + r;
            let (k0, k1) = (p00 / s, p10 / s);
            let innov = frame.pos[axis] - x[0];
            x = [x[0] + k0 * innov, x[1] + k1 * innov];
            p = [
                [(1.0 - k0) * p00, (1.0 - k0) * p01],
                [p10 - k1 * p00, p11 - k1 * p01],
            ];
            frame.pos[axis] = x[0];
        }
    }
    Ok(out)
}
