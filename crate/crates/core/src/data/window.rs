use super::{kalman_smooth, RawTrajectory, SmoothingConfig, TrajectoryWindow, WindowSource};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const N_PAST: usize = 20;
pub const M_FUTURE: usize = 10;

/// Backward differences `v_t = p_t − p_{t−1}` with `v_0 = 0`.
pub fn compute_velocities(traj: &RawTrajectory) -> Vec<[f64; 3]> {
    let f = &traj.frames;
    (0..f.len())
        .map(|t| {
            if t == 0 {
                [0.0; 3]
            } else {
                std::array::from_fn(|a| f[t].pos[a] - f[t - 1].pos[a])
            }
        })
        .collect()
}

/// Sliding windows of `n` input frames followed by `m` target frames.
/// Trajectories shorter than `n + m` yield no windows.
pub fn window(traj: &RawTrajectory, n: usize, m: usize, stride: usize) -> Result<Vec<TrajectoryWindow>> {
    if n == 0 || m == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window sizes must be positive (n={n}, m={m}, stride={stride})"
        )));
    }
    let len = traj.frames.len();
    if len < n + m {
        return Ok(Vec::new());
    }
    let vel = compute_velocities(traj);
    let mut out = Vec::with_capacity((len - n - m) / stride + 1);
    for start in (0..=len - n - m).step_by(stride) {
        let mut inputs = Vec::with_capacity(n * 6);
        for t in start..start + n {
            inputs.extend_from_slice(&traj.frames[t].pos);
            inputs.extend_from_slice(&vel[t]);
        }
        let target: Vec<f64> = (start + n..start + n + m).flat_map(|t| traj.frames[t].pos).collect();
        out.push(TrajectoryWindow {
            inputs: Tensor::matrix(n, 6, inputs)?,
            target: Tensor::matrix(m, 3, target)?,
            label: traj.action_id,
            source: WindowSource {
                subject: traj.subject_id.clone(),
                trial: traj.trial_id.clone(),
                start,
            },
        });
    }
    Ok(out)
}

/// Smooths (when configured) and windows every trajectory, ordered by
/// (subject, trial, start).
pub fn prepare_windows(
    trajectories: &[RawTrajectory],
    smoothing: Option<SmoothingConfig>,
    n: usize,
    m: usize,
    stride: usize,
) -> Result<Vec<TrajectoryWindow>> {
    let mut out = Vec::new();
    for traj in trajectories {
        if traj.frames.len() < n + m {
            continue;
        }
        let windows = match smoothing {
            Some(cfg) => window(&kalman_smooth(traj, cfg)?, n, m, stride)?,
            None => window(traj, n, m, stride)?,
        };
        out.extend(windows);
    }
    out.sort_by(|a, b| a.source.cmp(&b.source));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frame;

    fn line(len: usize) -> RawTrajectory {
        RawTrajectory {
            subject_id: "S".into(),
            trial_id: "T".into(),
            action_id: 4,
            frames: (0..len)
                .map(|i| Frame {
                    t_index: i as u64,
                    pos: [i as f64, (i * i) as f64, 1.0],
                })
                .collect(),
        }
    }

    #[test]
    fn velocities_by_differencing() {
        let mut t = line(3);
        for (f, x) in t.frames.iter_mut().zip([0.0, 1.0, 3.0]) {
            f.pos = [x, 5.0, 5.0];
        }
        let v = compute_velocities(&t);
        assert_eq!(v.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
        assert!(v.iter().all(|v| v[1] == 0.0 && v[2] == 0.0));
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&line(29), 20, 10, 1).unwrap().len(), 0);
        assert_eq!(window(&line(30), 20, 10, 1).unwrap().len(), 1);
        assert_eq!(window(&line(35), 20, 10, 1).unwrap().len(), 6);
        assert_eq!(window(&line(35), 20, 10, 2).unwrap().len(), 3);
        assert!(window(&line(35), 20, 10, 0).is_err());
    }

    #[test]
    fn window_layout() {
        let w = &window(&line(32), 20, 10, 1).unwrap()[2];
        assert_eq!(w.source.start, 2);
        assert_eq!(w.label, 4);
        assert_eq!(w.inputs.row(0), &[2.0, 4.0, 1.0, 1.0, 3.0, 0.0]);
        assert_eq!(w.target.row(0), &[22.0, 484.0, 1.0]);
        assert_eq!(w.target.row(9), &[31.0, 961.0, 1.0]);
    }
}
