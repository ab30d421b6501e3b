//! And-or task graphs: groups whose take actions must all happen before a
//! fixed sequence of follow-up actions, plus a shared retraction action.

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub use parse::{parse, serialize, ParseError, ParseErrorKind};

/// Source text of the bundled card-making graph.
pub const CARD_MAKING: &str = include_str!("../../data/card_making.graph");

/// The bundled card-making graph.
pub fn card_making() -> AndOrGraph {
    parse(CARD_MAKING).expect("bundled graph parses")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupOrdering {
    /// Groups may interleave freely.
    Unordered,
    /// Each group must be finished before the next listed group starts.
    Ordered,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Group {
    pub name: String,
    pub take: BTreeSet<u32>,
    pub seq: Vec<u32>,
}

impl Group {
    fn len(&self) -> usize {
        self.take.len() + self.seq.len()
    }
}

/// A validated graph. Construct with [`parse`] or [`AndOrGraph::new`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AndOrGraph {
    name: String,
    actions: BTreeMap<u32, String>,
    groups: Vec<Group>,
    retraction: Option<u32>,
    ordering: GroupOrdering,
}

impl AndOrGraph {
    /// Checks that every non-retraction action sits in exactly one group,
    /// groups only mention declared actions and the retraction action is in
    /// no group.
    pub fn new(
        name: String,
        actions: BTreeMap<u32, String>,
        groups: Vec<Group>,
        retraction: Option<u32>,
        ordering: GroupOrdering,
    ) -> std::result::Result<Self, String> {
        if groups.is_empty() {
            return Err("graph has no groups".into());
        }
        if actions.contains_key(&0) {
            return Err("action ids start at 1".into());
        }
        let mut owner: BTreeMap<u32, &str> = BTreeMap::new();
        let mut names = BTreeSet::new();
        for g in &groups {
            if !names.insert(g.name.as_str()) {
                return Err(format!("group `{}` defined twice", g.name));
            }
            if g.len() == 0 {
                return Err(format!("group `{}` is empty", g.name));
            }
            let mut seen = BTreeSet::new();
            for &id in g.take.iter().chain(&g.seq) {
                if !seen.insert(id) {
                    return Err(format!("action {id} listed twice in group `{}`", g.name));
                }
                if !actions.contains_key(&id) {
                    return Err(format!("group `{}` uses undeclared action {id}", g.name));
                }
                if Some(id) == retraction {
                    return Err(format!("retraction action {id} cannot belong to group `{}`", g.name));
                }
                if let Some(other) = owner.insert(id, &g.name) {
                    return Err(format!("action {id} belongs to groups `{other}` and `{}`", g.name));
                }
            }
        }
        if let Some(r) = retraction {
            if !actions.contains_key(&r) {
                return Err(format!("retraction action {r} is not declared"));
            }
        }
        for &id in actions.keys() {
            if Some(id) != retraction && !owner.contains_key(&id) {
                return Err(format!("action {id} belongs to no group"));
            }
        }
        Ok(AndOrGraph {
            name,
            actions,
            groups,
            retraction,
            ordering,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn actions(&self) -> &BTreeMap<u32, String> {
        &self.actions
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn retraction(&self) -> Option<u32> {
        self.retraction
    }

    pub fn ordering(&self) -> GroupOrdering {
        self.ordering
    }

    fn group_of(&self, id: u32) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.take.contains(&id) || g.seq.contains(&id))
    }

    fn is_take(&self, id: u32) -> bool {
        self.groups.iter().any(|g| g.take.contains(&id))
    }

    /// Number of actions that belong to a group.
    pub fn task_len(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    UnknownAction,
    RepeatedAction,
    SeqBeforeTakes,
    SeqOutOfOrder,
    RetractionWithoutTake,
    GroupOutOfOrder,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReason::UnknownAction => "unknown action",
            ViolationReason::RepeatedAction => "repeated action",
            ViolationReason::SeqBeforeTakes => "seq before takes",
            ViolationReason::SeqOutOfOrder => "seq out of order",
            ViolationReason::RetractionWithoutTake => "retraction without take",
            ViolationReason::GroupOutOfOrder => "group out of order",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub action: u32,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "action {} at index {}: {}", self.action, self.index, self.reason)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    FirstViolation(Violation),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

/// Incremental replay of a trace.
struct Progress<'g> {
    graph: &'g AndOrGraph,
    done: BTreeSet<u32>,
    last: Option<u32>,
}

impl<'g> Progress<'g> {
    fn new(graph: &'g AndOrGraph) -> Self {
        Progress {
            graph,
            done: BTreeSet::new(),
            last: None,
        }
    }

    fn group_complete(&self, g: &Group) -> bool {
        g.take.iter().chain(&g.seq).all(|id| self.done.contains(id))
    }

    fn check(&self, id: u32) -> std::result::Result<(), ViolationReason> {
        let graph = self.graph;
        if Some(id) == graph.retraction {
            return match self.last {
                Some(prev) if graph.is_take(prev) => Ok(()),
                _ => Err(ViolationReason::RetractionWithoutTake),
            };
        }
        let gi = graph.group_of(id).ok_or(ViolationReason::UnknownAction)?;
        if self.done.contains(&id) {
            return Err(ViolationReason::RepeatedAction);
        }
        if graph.ordering == GroupOrdering::Ordered && !graph.groups[..gi].iter().all(|g| self.group_complete(g)) {
            return Err(ViolationReason::GroupOutOfOrder);
        }
        let g = &graph.groups[gi];
        if let Some(pos) = g.seq.iter().position(|&s| s == id) {
            if !g.take.iter().all(|t| self.done.contains(t)) {
                return Err(ViolationReason::SeqBeforeTakes);
            }
            if !g.seq[..pos].iter().all(|s| self.done.contains(s)) {
                return Err(ViolationReason::SeqOutOfOrder);
            }
        }
        Ok(())
    }

    fn push(&mut self, id: u32) {
        if Some(id) != self.graph.retraction {
            self.done.insert(id);
        }
        self.last = Some(id);
    }
}

/// Checks `trace` against the graph's rules and reports the first offending
/// position.
pub fn validate_trace(graph: &AndOrGraph, trace: &[u32]) -> Verdict {
    let mut state = Progress::new(graph);
    for (index, &action) in trace.iter().enumerate() {
        if let Err(reason) = state.check(action) {
            return Verdict::FirstViolation(Violation { index, action, reason });
        }
        state.push(action);
    }
    Verdict::Valid
}

fn replay<'g>(graph: &'g AndOrGraph, trace: &[u32]) -> Result<Progress<'g>> {
    let mut state = Progress::new(graph);
    for (index, &action) in trace.iter().enumerate() {
        state
            .check(action)
            .map_err(|reason| Error::InvalidTrace(Violation { index, action, reason }))?;
        state.push(action);
    }
    Ok(state)
}

/// Actions that may legally come next after a valid `trace`.
pub fn feasible_next(graph: &AndOrGraph, trace: &[u32]) -> Result<BTreeSet<u32>> {
    let state = replay(graph, trace)?;
    Ok(graph
        .actions
        .keys()
        .copied()
        .filter(|&id| state.check(id).is_ok())
        .collect())
}

/// Fraction of grouped actions completed by a valid `trace`.
pub fn progress(graph: &AndOrGraph, trace: &[u32]) -> Result<f64> {
    let state = replay(graph, trace)?;
    Ok(state.done.len() as f64 / graph.task_len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_graph() {
        let g = card_making();
        assert_eq!(g.groups().len(), 3);
        assert_eq!(g.retraction(), Some(12));
        assert_eq!(g.task_len(), 11);
        assert_eq!(g.groups()[1].seq, vec![6, 8, 9]);
    }

    #[test]
    fn stated_examples() {
        let g = card_making();
        assert_eq!(validate_trace(&g, &[1, 12, 2, 12, 3]), Verdict::Valid);
        assert_eq!(
            validate_trace(&g, &[3, 1, 2]),
            Verdict::FirstViolation(Violation {
                index: 0,
                action: 3,
                reason: ViolationReason::SeqBeforeTakes
            })
        );
        assert_eq!(ViolationReason::SeqBeforeTakes.to_string(), "seq before takes");
        let reason = |t: &[u32]| match validate_trace(&g, t) {
            Verdict::FirstViolation(v) => Some(v.reason),
            Verdict::Valid => None,
        };
        assert_eq!(reason(&[12]), Some(ViolationReason::RetractionWithoutTake));
        assert_eq!(reason(&[1, 12, 12]), Some(ViolationReason::RetractionWithoutTake));
        assert_eq!(reason(&[1, 1]), Some(ViolationReason::RepeatedAction));
        assert_eq!(reason(&[4, 5, 7, 8]), Some(ViolationReason::SeqOutOfOrder));
        assert_eq!(reason(&[13]), Some(ViolationReason::UnknownAction));
    }

    #[test]
    fn next_and_progress() {
        let g = card_making();
        assert_eq!(feasible_next(&g, &[]).unwrap(), BTreeSet::from([1, 2, 4, 5, 7, 10]));
        assert_eq!(feasible_next(&g, &[1, 2]).unwrap(), BTreeSet::from([3, 4, 5, 7, 10, 12]));
        let all = [1, 2, 3, 4, 5, 7, 6, 8, 9, 10, 11];
        assert!(feasible_next(&g, &all).unwrap().is_empty());
        assert_eq!(progress(&g, &all).unwrap(), 1.0);
        assert_eq!(progress(&g, &[]).unwrap(), 0.0);
        assert!(progress(&g, &[3]).is_err());
        assert!(feasible_next(&g, &[3]).is_err());
    }

    #[test]
    fn ordered_groups() {
        let text = CARD_MAKING.replace("ordering unordered", "ordering ordered");
        let g = parse(&text).unwrap();
        assert_eq!(feasible_next(&g, &[]).unwrap(), BTreeSet::from([1, 2]));
        assert!(!validate_trace(&g, &[1, 4]).is_valid());
        assert!(validate_trace(&g, &[1, 2, 3, 4]).is_valid());
    }
}
