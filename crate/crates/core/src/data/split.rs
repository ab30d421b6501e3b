use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::numeric::Seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

/// How trials are distributed over splits. Both schemes shuffle within each
/// (subject, action) group so every action is represented proportionally.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitScheme {
    /// Trials of `train_subject` go to train/val by `train_fraction`; every
    /// other subject is held out as test.
    SubjectHoldout { train_subject: String, train_fraction: f64 },
    /// Proportional split of every group.
    Ratio { train: f64, val: f64, test: f64 },
}

impl SplitScheme {
    pub fn holdout(train_subject: &str) -> Self {
        SplitScheme::SubjectHoldout {
            train_subject: train_subject.to_string(),
            train_fraction: 0.8,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SplitScheme::SubjectHoldout { train_fraction, .. } => {
                if !(0.0..=1.0).contains(train_fraction) {
                    return Err(Error::Config(format!("train fraction {train_fraction} outside [0, 1]")));
                }
            }
            SplitScheme::Ratio { train, val, test } => {
                let parts = [*train, *val, *test];
                if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || parts.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config(format!(
                        "split ratios must be non-negative with a positive sum, got {train}/{val}/{test}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::SubjectHoldout {
                train_subject,
                train_fraction,
            } => write!(f, "holdout:{train_subject}:{train_fraction}"),
            SplitScheme::Ratio { train, val, test } => write!(f, "ratio:{train}:{val}:{test}"),
        }
    }
}

/// Parses `holdout:<subject>[:<fraction>]` or `ratio:<train>:<val>:<test>`.
impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{v}` in split scheme `{s}`")))
        };
        let scheme = match parts.as_slice() {
            ["holdout", subject] if !subject.is_empty() => SplitScheme::holdout(subject),
            ["holdout", subject, frac] if !subject.is_empty() => SplitScheme::SubjectHoldout {
                train_subject: subject.to_string(),
                train_fraction: num(frac)?,
            },
            ["ratio", a, b, c] => SplitScheme::Ratio {
                train: num(a)?,
                val: num(b)?,
                test: num(c)?,
            },
            _ => {
                return Err(Error::Config(format!(
                    "unknown split scheme `{s}` (expected holdout:<subject>[:<fraction>] or ratio:<train>:<val>:<test>)"
                )))
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject: String,
    pub trial: String,
    pub split: SplitTag,
}

/// Trial-level split assignment, serialized as a JSON array of entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitManifest {
    pub entries: Vec<ManifestEntry>,
}

impl SplitManifest {
    pub fn lookup(&self) -> HashMap<(&str, &str), SplitTag> {
        self.entries
            .iter()
            .map(|e| ((e.subject.as_str(), e.trial.as_str()), e.split))
            .collect()
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.entries.iter().filter(|e| e.split == tag).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: SplitManifest = serde_json::from_str(text)?;
        let mut seen = HashMap::new();
        for e in &manifest.entries {
            if seen.insert((e.subject.as_str(), e.trial.as_str()), e.split).is_some() {
                return Err(Error::Config(format!(
                    "manifest lists {}/{} more than once",
                    e.subject, e.trial
                )));
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Assigns every `(subject, trial, action)` to a split. The result is
/// independent of input order and sorted by subject then trial.
pub fn assign_trials(trials: &[(String, String, usize)], scheme: &SplitScheme, seed: Seed) -> Result<SplitManifest> {
    scheme.validate()?;
    if trials.is_empty() {
        return Err(Error::Empty("trials to split"));
    }
    let mut groups: BTreeMap<(&str, usize), Vec<&str>> = BTreeMap::new();
    for (subject, trial, action) in trials {
        groups.entry((subject.as_str(), *action)).or_default().push(trial.as_str());
    }
    if let SplitScheme::SubjectHoldout { train_subject, .. } = scheme {
        if !groups.keys().any(|(s, _)| s == train_subject) {
            return Err(Error::Config(format!("no trials for training subject `{train_subject}`")));
        }
    }

    let mut rng = seed.derive(0x5EED_5917).rng();
    let mut entries = Vec::with_capacity(trials.len());
    for ((subject, _), mut ids) in groups {
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        let n = ids.len();
        let (n_train, n_val) = match scheme {
            SplitScheme::SubjectHoldout {
                train_subject,
                train_fraction,
            } => {
                if subject == train_subject {
                    let t = ((n as f64 * train_fraction).round() as usize).min(n);
                    (t, n - t)
                } else {
                    (0, 0)
                }
            }
            SplitScheme::Ratio { train, val, test } => {
                let total = train + val + test;
                let t = ((n as f64 * train / total).round() as usize).min(n);
                let v = ((n as f64 * val / total).round() as usize).min(n - t);
                (t, v)
            }
        };
        for (i, trial) in ids.into_iter().enumerate() {
            let split = if i < n_train {
                SplitTag::Train
            } else if i < n_train + n_val {
                SplitTag::Val
            } else {
                SplitTag::Test
            };
            entries.push(ManifestEntry {
                subject: subject.to_string(),
                trial: trial.to_string(),
                split,
            });
        }
    }
    entries.sort_by(|a, b| (&a.subject, &a.trial).cmp(&(&b.subject, &b.trial)));
    Ok(SplitManifest { entries })
}

/// Windows with one split tag each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub windows: Vec<TrajectoryWindow>,
    pub tags: Vec<SplitTag>,
}

impl Dataset {
    /// Tags windows by the split of their source trial.
    pub fn from_manifest(windows: Vec<TrajectoryWindow>, manifest: &SplitManifest) -> Result<Self> {
        let lookup = manifest.lookup();
        let tags = windows
            .iter()
            .map(|w| {
                lookup
                    .get(&(w.source.subject.as_str(), w.source.trial.as_str()))
                    .copied()
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "trial {}/{} is missing from the split manifest",
                            w.source.subject, w.source.trial
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { windows, tags })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn get(&self, tag: SplitTag) -> Vec<TrajectoryWindow> {
        self.windows
            .iter()
            .zip(&self.tags)
            .filter(|(_, t)| **t == tag)
            .map(|(w, _)| w.clone())
            .collect()
    }
}

/// Trial-level split of windows.
pub fn split(windows: Vec<TrajectoryWindow>, scheme: &SplitScheme, seed: Seed) -> Result<Dataset> {
    if windows.is_empty() {
        return Err(Error::Empty("windows to split"));
    }
    let mut trials: Vec<(String, String, usize)> = windows
        .iter()
        .map(|w| (w.source.subject.clone(), w.source.trial.clone(), w.label))
        .collect();
    trials.sort();
    trials.dedup();
    let manifest = assign_trials(&trials, scheme, seed)?;
    Dataset::from_manifest(windows, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(subject: &str, per_action: usize, actions: usize) -> Vec<(String, String, usize)> {
        (1..=actions)
            .flat_map(|a| (0..per_action).map(move |t| (subject.to_string(), format!("{a}-{t}"), a)))
            .collect()
    }

    #[test]
    fn holdout_counts() {
        let mut all = trials("A", 10, 3);
        all.extend(trials("B", 4, 3));
        let m = assign_trials(&all, &SplitScheme::holdout("A"), Seed(1)).unwrap();
        assert_eq!(m.count(SplitTag::Train), 24);
        assert_eq!(m.count(SplitTag::Val), 6);
        assert_eq!(m.count(SplitTag::Test), 12);
        assert!(m.entries.iter().filter(|e| e.subject == "B").all(|e| e.split == SplitTag::Test));
        assert!(m.entries.iter().filter(|e| e.subject == "A").all(|e| e.split != SplitTag::Test));
    }

    #[test]
    fn input_order_does_not_matter() {
        let all = trials("A", 7, 4);
        let mut rev = all.clone();
        rev.reverse();
        let scheme = SplitScheme::Ratio {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        };
        assert_eq!(
            assign_trials(&all, &scheme, Seed(4)).unwrap(),
            assign_trials(&rev, &scheme, Seed(4)).unwrap()
        );
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("holdout:A".parse::<SplitScheme>().unwrap(), SplitScheme::holdout("A"));
        let r: SplitScheme = "ratio:0.7:0.15:0.15".parse().unwrap();
        assert_eq!(r.to_string().parse::<SplitScheme>().unwrap(), r);
        assert!("ratio:1:2".parse::<SplitScheme>().is_err());
        assert!("holdout:A:1.5".parse::<SplitScheme>().is_err());
        assert!("ratio:0:0:0".parse::<SplitScheme>().is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = assign_trials(&trials("A", 3, 2), &SplitScheme::holdout("A"), Seed(2)).unwrap();
        let back = SplitManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().unwrap().contains("\"split\": \"train\""));
    }

    #[test]
    fn errors() {
        assert!(assign_trials(&[], &SplitScheme::holdout("A"), Seed(0)).is_err());
        assert!(assign_trials(&trials("B", 2, 1), &SplitScheme::holdout("A"), Seed(0)).is_err());
        assert!(split(Vec::new(), &SplitScheme::holdout("A"), Seed(0)).is_err());
    }
}
