use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Frame, RawTrajectory};
use crate::error::{Error, Result};
use crate::numeric::Seed;

pub const N_ACTIONS: usize = 12;
pub const RETRACTION_ACTION: usize = 12;
/// Actions that pick an item up; retractions start from one of these goals.
pub const TAKE_ACTIONS: [usize; 6] = [1, 2, 4, 5, 7, 10];
/// Reach length in frames at `speed_scale = 1`.
pub const BASE_REACH_FRAMES: f64 = 40.0;

/// Rest position of the wrist, near edge of the desk.
pub const HOME: [f64; 3] = [0.0, 2.0, 12.0];

// Desk spans x ∈ [−30, 30], y ∈ [0, 40]; z is height above the surface.
const GOALS: [[f64; 3]; N_ACTIONS] = [
    [-24.0, 30.0, 2.0],
    [0.0, 30.0, 1.0],
    [0.0, 18.0, 1.0],
    [24.0, 32.0, 2.0],
    [-12.0, 36.0, 1.0],
    [8.0, 12.0, 4.0],
    [24.0, 18.0, 3.0],
    [-8.0, 12.0, 3.0],
    [-2.0, 22.0, 1.0],
    [-26.0, 16.0, 2.0],
    [6.0, 26.0, 1.0],
    HOME,
];

/// End point of `action` (1-based). The retraction action ends at [`HOME`].
pub fn goal_position(action: usize) -> Option<[f64; 3]> {
    (1..=N_ACTIONS).contains(&action).then(|| GOALS[action - 1])
}

/// Minimum-jerk interpolation, `tau` in `[0, 1]`.
pub fn min_jerk(start: [f64; 3], goal: [f64; 3], tau: f64) -> [f64; 3] {
    let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
    std::array::from_fn(|a| start[a] + (goal[a] - start[a]) * s)
}

/// Frames per reach for a subject moving `speed_scale` times the base speed.
pub fn reach_duration(speed_scale: f64) -> usize {
    ((BASE_REACH_FRAMES / speed_scale).ceil() as usize).max(2)
}

/// Movement style of one synthetic subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub name: String,
    pub speed_scale: f64,
    pub offset_cm: [f64; 3],
    pub noise_std_cm: f64,
    pub goal_jitter_cm: f64,
    pub seed: u64,
}

impl SubjectProfile {
    /// Baseline subject used for training.
    pub fn reference(name: &str, seed: u64) -> Self {
        SubjectProfile {
            name: name.to_string(),
            speed_scale: 1.0,
            offset_cm: [0.0; 3],
            noise_std_cm: 0.5,
            goal_jitter_cm: 1.0,
            seed,
        }
    }

    /// Faster subject working from a displaced posture.
    pub fn shifted(name: &str, seed: u64) -> Self {
        SubjectProfile {
            speed_scale: 1.3,
            offset_cm: [3.0, -2.0, 1.0],
            ..Self::reference(name, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_scale > 0.0 && self.speed_scale.is_finite()) {
            return Err(Error::Config(format!(
                "profile {}: speed_scale must be positive, got {}",
                self.name, self.speed_scale
            )));
        }
        if !(self.noise_std_cm >= 0.0 && self.noise_std_cm.is_finite())
            || !(self.goal_jitter_cm >= 0.0 && self.goal_jitter_cm.is_finite())
        {
            return Err(Error::Config(format!(
                "profile {}: noise and jitter must be non-negative",
                self.name
            )));
        }
        if self.offset_cm.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("profile {}: offset must be finite", self.name)));
        }
        Ok(())
    }
}

fn jittered(p: [f64; 3], jitter: &Normal<f64>, rng: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|a| p[a] + jitter.sample(rng))
}

/// Generates `trials_per_action` reaches per action per profile.
///
/// Actions 1–11 reach from home to their goal; action 12 returns home from
/// the goal of a take action, cycling through [`TAKE_ACTIONS`].
pub fn synth_generate(profiles: &[SubjectProfile], trials_per_action: usize, seed: Seed) -> Result<Vec<RawTrajectory>> {
    if profiles.is_empty() {
        return Err(Error::Empty("subject profiles"));
    }
    for p in profiles {
        p.validate()?;
    }
    let mut out = Vec::with_capacity(profiles.len() * N_ACTIONS * trials_per_action);
    for profile in profiles {
        let mut rng = seed.derive(profile.seed).rng();
        let jitter = Normal::new(0.0, profile.goal_jitter_cm).expect("validated std");
        let noise = Normal::new(0.0, profile.noise_std_cm).expect("validated std");
        let frames = reach_duration(profile.speed_scale);
        for action in 1..=N_ACTIONS {
            for trial in 0..trials_per_action {
                let (start, goal) = if action == RETRACTION_ACTION {
                    let from = TAKE_ACTIONS[trial % TAKE_ACTIONS.len()];
                    (GOALS[from - 1], HOME)
                } else {
                    (HOME, GOALS[action - 1])
                };
                let start = jittered(start, &jitter, &mut rng);
                let goal = jittered(goal, &jitter, &mut rng);
                let frames = (0..frames)
                    .map(|i| {
                        let tau = i as f64 / (frames - 1) as f64;
                        let p = min_jerk(start, goal, tau);
                        Frame {
                            t_index: i as u64,
                            pos: std::array::from_fn(|a| p[a] + profile.offset_cm[a] + noise.sample(&mut rng)),
                        }
                    })
                    .collect();
                out.push(RawTrajectory {
                    subject_id: profile.name.clone(),
                    trial_id: format!("{action:02}-{trial:03}"),
                    action_id: action,
                    frames,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_jerk_endpoints() {
        let (s, g) = ([1.0, -2.0, 3.0], [7.5, 0.25, -1.0]);
        assert_eq!(min_jerk(s, g, 0.0), s);
        assert_eq!(min_jerk(s, g, 1.0), g);
        let mid = min_jerk(s, g, 0.5);
        for a in 0..3 {
            assert!((mid[a] - 0.5 * (s[a] + g[a])).abs() < 1e-12);
        }
    }

    #[test]
    fn durations() {
        assert_eq!(reach_duration(1.0), 40);
        assert_eq!(reach_duration(2.0), 20);
        assert_eq!(reach_duration(1.3), 31);
        assert_eq!(reach_duration(3.0), 14);
    }

    #[test]
    fn goals_lie_on_the_desk() {
        for a in 1..=N_ACTIONS {
            let g = goal_position(a).unwrap();
            assert!((-30.0..=30.0).contains(&g[0]) && (0.0..=40.0).contains(&g[1]));
        }
        assert_eq!(goal_position(0), None);
        assert_eq!(goal_position(13), None);
    }

    #[test]
    fn noiseless_reaches_hit_endpoints() {
        let profile = SubjectProfile {
            noise_std_cm: 0.0,
            goal_jitter_cm: 0.0,
            offset_cm: [0.0; 3],
            ..SubjectProfile::reference("A", 1)
        };
        let trajs = synth_generate(&[profile], 2, Seed(3)).unwrap();
        assert_eq!(trajs.len(), 24);
        for t in &trajs {
            assert_eq!(t.frames.len(), 40);
            let first = t.frames[0].pos;
            let last = t.frames.last().unwrap().pos;
            if t.action_id == RETRACTION_ACTION {
                assert_eq!(last, HOME);
                assert!(TAKE_ACTIONS.iter().any(|&a| GOALS[a - 1] == first));
            } else {
                assert_eq!(first, HOME);
                assert_eq!(last, GOALS[t.action_id - 1]);
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_generate(&[SubjectProfile::reference("A", 1)], 3, Seed(9)).unwrap();
        let b = synth_generate(&[SubjectProfile::reference("A", 1)], 3, Seed(9)).unwrap();
        let c = synth_generate(&[SubjectProfile::reference("A", 2)], 3, Seed(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(synth_generate(&[], 1, Seed(0)).is_err());
        let bad = SubjectProfile {
            speed_scale: 0.0,
            ..SubjectProfile::reference("A", 1)
        };
        assert!(synth_generate(&[bad], 1, Seed(0)).is_err());
    }
}
