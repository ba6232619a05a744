//! Classical rewriting properties of finite systems, with witnesses.
//!
//! Everything here reads only the reduction relation; probabilities are
//! ignored. Witnesses are the lexicographically smallest ones.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::par::{self, Execution};
use crate::rational::Prob;
use crate::system::{Analyzable, ExploredSystem, Pars, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Yes
        } else {
            Verdict::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Verdict::Yes
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Yes => "+",
            Verdict::No => "-",
            Verdict::Unknown => "?",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Termination,
    Normalization,
    LocalConfluence,
    Confluence,
    UniqueNormalForms,
    AsTermination,
    AsLocalConvergence,
    AsConvergence,
    ProbNormalization,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Termination => "termination",
            Property::Normalization => "normalization",
            Property::LocalConfluence => "local_confluence",
            Property::Confluence => "confluence",
            Property::UniqueNormalForms => "unique_normal_forms",
            Property::AsTermination => "as_termination",
            Property::AsLocalConvergence => "as_local_convergence",
            Property::AsConvergence => "as_convergence",
            Property::ProbNormalization => "prob_normalization",
        }
    }

    pub fn parse(name: &str) -> Option<Property> {
        [
            Property::Termination,
            Property::Normalization,
            Property::LocalConfluence,
            Property::Confluence,
            Property::UniqueNormalForms,
            Property::AsTermination,
            Property::AsLocalConvergence,
            Property::AsConvergence,
            Property::ProbNormalization,
        ]
        .into_iter()
        .find(|p| p.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NfEvidence {
    pub state: StateId,
    pub normal_form: StateId,
    #[serde(with = "crate::rational::serde_prob")]
    pub probability: Prob,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A rule path that returns to its first state.
    Cycle { path: Vec<StateId> },
    /// `left <- source -> right` (one step or many, depending on the property).
    Peak {
        source: StateId,
        left: StateId,
        right: StateId,
    },
    /// A peak whose ends have no common normal form reached with probability one.
    ReachPeak {
        source: StateId,
        left: StateId,
        right: StateId,
        #[serde(with = "crate::rational::serde_prob_map")]
        left_reach: BTreeMap<StateId, Prob>,
        #[serde(with = "crate::rational::serde_prob_map")]
        right_reach: BTreeMap<StateId, Prob>,
    },
    State { state: StateId },
    NormalForms {
        state: StateId,
        normal_forms: Vec<StateId>,
    },
    Divergence {
        state: StateId,
        #[serde(with = "crate::rational::serde_prob")]
        divergence: Prob,
    },
    Frontier { states: Vec<StateId> },
    Evidence { entries: Vec<NfEvidence> },
    Rule { from: StateId, to: StateId },
    /// Two states that a mapping sends to the same image.
    Collision {
        left: StateId,
        right: StateId,
        image: StateId,
    },
    /// Two states related on one side of a mapping but not on the other.
    Pair { left: StateId, right: StateId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub property: Property,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Decision {
    pub fn yes(property: Property) -> Self {
        Decision {
            property,
            verdict: Verdict::Yes,
            witness: None,
            notes: Vec::new(),
        }
    }

    pub fn no(property: Property, witness: Witness) -> Self {
        Decision {
            property,
            verdict: Verdict::No,
            witness: Some(witness),
            notes: Vec::new(),
        }
    }

    pub(crate) fn from_witness(property: Property, witness: Option<Witness>) -> Self {
        match witness {
            None => Decision::yes(property),
            Some(w) => Decision::no(property, w),
        }
    }

    pub fn frontier(property: Property, states: Vec<StateId>) -> Self {
        Decision {
            property,
            verdict: Verdict::Unknown,
            witness: Some(Witness::Frontier { states }),
            notes: vec!["a finite exploration window cannot certify a global property".into()],
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn is_yes(&self) -> bool {
        self.verdict.is_yes()
    }
}

// ---------------------------------------------------------------------------
// Reachability

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub(crate) fn new(n: usize) -> Self {
        BitSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub(crate) fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        fresh
    }

    pub(crate) fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub(crate) fn intersects(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |b| word & (1u64 << b) != 0).map(move |b| w * 64 + b)
        })
    }
}

/// The reflexive-transitive closure `->*` of a finite system.
#[derive(Clone, Debug)]
pub struct Reachability {
    states: Vec<StateId>,
    rows: Vec<BitSet>,
}

impl Reachability {
    pub fn reaches(&self, s: &StateId, t: &StateId) -> bool {
        match (self.pos(s), self.pos(t)) {
            (Some(i), Some(j)) => self.rows[i].contains(j),
            _ => false,
        }
    }

    pub fn reachable_from(&self, s: &StateId) -> Vec<StateId> {
        self.pos(s)
            .map(|i| self.rows[i].iter().map(|j| self.states[j].clone()).collect())
            .unwrap_or_default()
    }

    /// All pairs `(s, t)` with `s ->* t`, sorted.
    pub fn pairs(&self) -> Vec<(StateId, StateId)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |j| (self.states[i].clone(), self.states[j].clone())))
            .collect()
    }

    fn pos(&self, s: &StateId) -> Option<usize> {
        self.states.binary_search(s).ok()
    }
}

pub(crate) fn closure_rows(sys: &Pars) -> Vec<BitSet> {
    let n = sys.len();
    par::map_indices(Execution::Parallel, n, |start| {
        let mut seen = BitSet::new(n);
        seen.insert(start);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for v in sys.successor_ids(u) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    })
}

pub fn star_closure(system: &Pars) -> Reachability {
    Reachability {
        states: system.states().to_vec(),
        rows: closure_rows(system),
    }
}

// ---------------------------------------------------------------------------
// Checkers

/// Shortest cycle through the smallest state that lies on any cycle.
fn find_cycle(sys: &Pars, rows: &[BitSet]) -> Option<Vec<StateId>> {
    let n = sys.len();
    let on_cycle = (0..n).find(|&s| sys.successor_ids(s).any(|t| rows[t].contains(s)))?;
    // breadth-first from the successors of s back to s; sorted adjacency makes
    // the first shortest path found the lexicographically smallest
    let mut parent = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    let mut seen = BitSet::new(n);
    for t in sys.successor_ids(on_cycle) {
        if t == on_cycle {
            return Some(vec![sys.state(on_cycle).clone(), sys.state(on_cycle).clone()]);
        }
        if seen.insert(t) {
            parent[t] = on_cycle;
            queue.push_back(t);
        }
    }
    while let Some(u) = queue.pop_front() {
        for v in sys.successor_ids(u) {
            if v == on_cycle {
                let mut back = Vec::new();
                let mut cur = u;
                while cur != on_cycle {
                    back.push(cur);
                    cur = parent[cur];
                }
                let mut path = vec![on_cycle];
                path.extend(back.into_iter().rev());
                path.push(on_cycle);
                return Some(path.into_iter().map(|i| sys.state(i).clone()).collect());
            }
            if seen.insert(v) {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    unreachable!("state on a cycle must reach itself")
}

fn refuse<A: Analyzable>(sys: &A, property: Property) -> Option<Decision> {
    if sys.has_frontier() {
        Some(Decision::frontier(property, sys.frontier_states()))
    } else {
        None
    }
}

/// Terminating iff the rule graph is acyclic.
pub fn check_termination<A: Analyzable>(system: &A) -> Decision {
    if let Some(d) = refuse(system, Property::Termination) {
        return d;
    }
    let sys = system.system();
    let rows = closure_rows(sys);
    Decision::from_witness(
        Property::Termination,
        find_cycle(sys, &rows).map(|path| Witness::Cycle { path }),
    )
}

fn nf_rows(sys: &Pars, rows: &[BitSet]) -> Vec<Vec<usize>> {
    rows.iter()
        .map(|row| row.iter().filter(|&j| sys.is_normal_form_idx(j)).collect())
        .collect()
}

pub fn check_normalizing<A: Analyzable>(system: &A) -> Decision {
    if let Some(d) = refuse(system, Property::Normalization) {
        return d;
    }
    let sys = system.system();
    let rows = closure_rows(sys);
    let nfs = nf_rows(sys, &rows);
    let witness = (0..sys.len())
        .find(|&i| nfs[i].is_empty())
        .map(|i| Witness::State {
            state: sys.state(i).clone(),
        });
    Decision::from_witness(Property::Normalization, witness)
}

pub fn check_local_confluence<A: Analyzable>(system: &A) -> Decision {
    check_local_confluence_with(system, Execution::Parallel)
}

pub fn check_local_confluence_with<A: Analyzable>(system: &A, exec: Execution) -> Decision {
    if let Some(d) = refuse(system, Property::LocalConfluence) {
        return d;
    }
    let sys = system.system();
    let rows = closure_rows(sys);
    let witness = par::find_first(exec, sys.len(), |s| {
        let succ: Vec<usize> = sys.successor_ids(s).collect();
        for (k, &a) in succ.iter().enumerate() {
            for &b in &succ[k + 1..] {
                if !rows[a].intersects(&rows[b]) {
                    return Some(peak(sys, s, a, b));
                }
            }
        }
        None
    });
    Decision::from_witness(Property::LocalConfluence, witness)
}

fn peak(sys: &Pars, s: usize, a: usize, b: usize) -> Witness {
    Witness::Peak {
        source: sys.state(s).clone(),
        left: sys.state(a).clone(),
        right: sys.state(b).clone(),
    }
}

pub fn check_confluence<A: Analyzable>(system: &A) -> Decision {
    check_confluence_with(system, Execution::Parallel)
}

/// Materializes `->*` and tests every multi-step peak for a common reduct.
pub fn check_confluence_with<A: Analyzable>(system: &A, exec: Execution) -> Decision {
    if let Some(d) = refuse(system, Property::Confluence) {
        return d;
    }
    let sys = system.system();
    let rows = closure_rows(sys);
    let witness = par::find_first(exec, sys.len(), |s| {
        let cone: Vec<usize> = rows[s].iter().collect();
        for (k, &a) in cone.iter().enumerate() {
            for &b in &cone[k + 1..] {
                if !rows[a].intersects(&rows[b]) {
                    return Some(peak(sys, s, a, b));
                }
            }
        }
        None
    });
    Decision::from_witness(Property::Confluence, witness)
}

/// `NF(s)` for every state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct NfMap(pub BTreeMap<StateId, BTreeSet<StateId>>);

impl NfMap {
    pub fn get(&self, s: &StateId) -> Option<&BTreeSet<StateId>> {
        self.0.get(s)
    }
}

pub fn nf_map(system: &Pars) -> NfMap {
    let rows = closure_rows(system);
    let nfs = nf_rows(system, &rows);
    NfMap(
        nfs.into_iter()
            .enumerate()
            .map(|(i, list)| {
                (
                    system.state(i).clone(),
                    list.into_iter().map(|j| system.state(j).clone()).collect(),
                )
            })
            .collect(),
    )
}

pub fn check_unique_nf<A: Analyzable>(system: &A) -> Decision {
    if let Some(d) = refuse(system, Property::UniqueNormalForms) {
        return d;
    }
    let sys = system.system();
    let rows = closure_rows(sys);
    let nfs = nf_rows(sys, &rows);
    let witness = (0..sys.len()).find(|&i| nfs[i].len() != 1).map(|i| Witness::NormalForms {
        state: sys.state(i).clone(),
        normal_forms: nfs[i].iter().map(|&j| sys.state(j).clone()).collect(),
    });
    Decision::from_witness(Property::UniqueNormalForms, witness)
}

/// Weakly connected components (`<->*` classes), each sorted, ordered by
/// smallest member.
pub fn convertibility_classes(system: &Pars) -> Vec<BTreeSet<StateId>> {
    let labels = class_labels(system);
    let mut classes: BTreeMap<usize, BTreeSet<StateId>> = BTreeMap::new();
    for (i, &root) in labels.iter().enumerate() {
        classes.entry(root).or_default().insert(system.state(i).clone());
    }
    let mut out: Vec<_> = classes.into_values().collect();
    out.sort_by(|a, b| a.first().cmp(&b.first()));
    out
}

/// Per state, the index of the smallest state in its `<->*` class.
pub(crate) fn class_labels(system: &Pars) -> Vec<usize> {
    let n = system.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for s in 0..n {
        for t in system.successor_ids(s) {
            let (a, b) = (find(&mut parent, s), find(&mut parent, t));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

// ---------------------------------------------------------------------------
// Exploration windows

/// Outcome of checking a property on a finite window of an infinite system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WindowVerdict {
    /// A counterexample that no extension of the window can repair.
    Refuted { witness: Witness },
    /// Every fully visible instance holds; `open` instances involve the
    /// frontier and could not be decided.
    Consistent { checked: usize, open: usize },
}

impl WindowVerdict {
    pub fn is_refuted(&self) -> bool {
        matches!(self, WindowVerdict::Refuted { .. })
    }
}

/// Local confluence restricted to expanded states. A peak joinable inside
/// the window is joinable in the full system; one whose cones are disjoint
/// and frontier-free is a genuine counterexample.
pub fn window_local_confluence(window: &ExploredSystem) -> WindowVerdict {
    let sys = &window.core;
    let rows = closure_rows(sys);
    window_peaks(window, &rows, |s| sys.successor_ids(s).collect())
}

pub fn window_confluence(window: &ExploredSystem) -> WindowVerdict {
    let sys = &window.core;
    let rows = closure_rows(sys);
    window_peaks(window, &rows, |s| rows[s].iter().collect())
}

fn window_peaks<F>(window: &ExploredSystem, rows: &[BitSet], ends: F) -> WindowVerdict
where
    F: Fn(usize) -> Vec<usize>,
{
    let sys = &window.core;
    let touches_frontier: Vec<bool> = rows
        .iter()
        .map(|row| row.iter().any(|j| window.is_frontier(j)))
        .collect();
    let (mut checked, mut open) = (0, 0);
    for s in 0..sys.len() {
        if window.is_frontier(s) {
            continue;
        }
        let list = ends(s);
        for (k, &a) in list.iter().enumerate() {
            for &b in &list[k + 1..] {
                if rows[a].intersects(&rows[b]) {
                    checked += 1;
                } else if touches_frontier[a] || touches_frontier[b] {
                    open += 1;
                } else {
                    return WindowVerdict::Refuted {
                        witness: peak(sys, s, a, b),
                    };
                }
            }
        }
    }
    WindowVerdict::Consistent { checked, open }
}

/// A cycle inside the window refutes termination outright.
pub fn window_termination(window: &ExploredSystem) -> WindowVerdict {
    let sys = &window.core;
    let rows = closure_rows(sys);
    match find_cycle(sys, &rows) {
        Some(path) => WindowVerdict::Refuted {
            witness: Witness::Cycle { path },
        },
        None => WindowVerdict::Consistent {
            checked: sys.len(),
            open: window.frontier.len(),
        },
    }
}
