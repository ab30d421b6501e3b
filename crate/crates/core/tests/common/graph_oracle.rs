//! Brute-force reference for trace validity: enumerate every complete
//! execution of the grouped actions, then accept a trace when its
//! non-retraction actions form a prefix of one of them and every retraction
//! directly follows a take.

use std::collections::HashSet;

use hrc_predict::taskgraph::{AndOrGraph, GroupOrdering};
use rand::Rng;

pub const TOY: &str = "\
graph toy
action 1 \"take a\"
action 2 \"take b\"
action 3 \"use ab\"
action 4 \"take c\"
action 5 \"use c\"
action 6 \"retract\"
group AB take [1, 2] seq [3]
group C take [4] seq [5]
retraction 6
";

pub struct Oracle {
    prefixes: HashSet<Vec<u32>>,
    takes: HashSet<u32>,
    retraction: Option<u32>,
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Declarative reading of the rules on a complete ordering.
fn admissible(graph: &AndOrGraph, order: &[u32]) -> bool {
    let pos = |id: u32| order.iter().position(|&x| x == id).unwrap();
    for g in graph.groups() {
        for &s in &g.seq {
            if g.take.iter().any(|&t| pos(t) > pos(s)) {
                return false;
            }
        }
        for w in g.seq.windows(2) {
            if pos(w[0]) > pos(w[1]) {
                return false;
            }
        }
    }
    if graph.ordering() == GroupOrdering::Ordered {
        let groups = graph.groups();
        for (i, a) in groups.iter().enumerate() {
            for b in &groups[i + 1..] {
                let last_a = a.take.iter().chain(&a.seq).map(|&x| pos(x)).max().unwrap();
                let first_b = b.take.iter().chain(&b.seq).map(|&x| pos(x)).min().unwrap();
                if last_a > first_b {
                    return false;
                }
            }
        }
    }
    true
}

impl Oracle {
    pub fn new(graph: &AndOrGraph) -> Self {
        let grouped: Vec<u32> = graph.groups().iter().flat_map(|g| g.take.iter().chain(&g.seq).copied()).collect();
        let mut prefixes = HashSet::new();
        for order in permutations(&grouped) {
            if admissible(graph, &order) {
                for k in 0..=order.len() {
                    prefixes.insert(order[..k].to_vec());
                }
            }
        }
        Oracle {
            prefixes,
            takes: graph.groups().iter().flat_map(|g| g.take.iter().copied()).collect(),
            retraction: graph.retraction(),
        }
    }

    pub fn valid(&self, trace: &[u32]) -> bool {
        let mut core = Vec::new();
        for (i, &a) in trace.iter().enumerate() {
            if Some(a) == self.retraction {
                if i == 0 || !self.takes.contains(&trace[i - 1]) {
                    return false;
                }
            } else {
                core.push(a);
            }
        }
        self.prefixes.contains(&core)
    }

    /// Index of the shortest invalid prefix's last element.
    pub fn first_violation(&self, trace: &[u32]) -> Option<usize> {
        (0..trace.len()).find(|&i| !self.valid(&trace[..=i]))
    }
}

/// Every sequence over `alphabet` of length at most `max_len`.
pub fn all_traces(alphabet: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &frontier {
            for &a in alphabet {
                let mut u: Vec<u32> = t.clone();
                u.push(a);
                next.push(u);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Structural invariants any accepted graph must satisfy, checked from the
/// public accessors.
pub fn invariants_hold(graph: &AndOrGraph) -> bool {
    let mut owners = std::collections::HashMap::new();
    for g in graph.groups() {
        if g.take.is_empty() && g.seq.is_empty() {
            return false;
        }
        for &id in g.take.iter().chain(&g.seq) {
            if !graph.actions().contains_key(&id) || Some(id) == graph.retraction() {
                return false;
            }
            if owners.insert(id, g.name.clone()).is_some() {
                return false;
            }
        }
    }
    let names: HashSet<_> = graph.groups().iter().map(|g| &g.name).collect();
    names.len() == graph.groups().len()
        && !graph.groups().is_empty()
        && graph.retraction().is_none_or(|r| graph.actions().contains_key(&r))
        && graph.actions().keys().all(|&id| id > 0 && (Some(id) == graph.retraction() || owners.contains_key(&id)))
}

/// Small random edits of a graph description.
pub fn mutate(text: &str, rng: &mut impl Rng) -> String {
    const PIECES: [&str; 14] = ["1", "7", "12", "0", "[", "]", ",", "\"", "\n", " ", "group", "take", "seq", "retraction"];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..4) {
        let at = rng.random_range(0..=chars.len());
        match rng.random_range(0..4) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => {
                let piece = PIECES[rng.random_range(0..PIECES.len())];
                for (k, c) in piece.chars().enumerate() {
                    chars.insert(at + k, c);
                }
            }
            2 if at < chars.len() && chars[at].is_ascii_digit() => {
                chars[at] = char::from(b'0' + rng.random_range(0..10u8));
            }
            _ => {
                let lines: Vec<&str> = text.lines().collect();
                let line = lines[rng.random_range(0..lines.len())];
                chars.splice(at..at, line.chars().chain(std::iter::once('\n')));
            }
        }
    }
    chars.into_iter().collect()
}
