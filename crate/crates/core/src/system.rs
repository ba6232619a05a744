//! System representation: states, rules, validation and bounded exploration.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_prob, parse_prob, Prob};

/// Opaque name of a state. Ordered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(String);

impl StateId {
    pub fn new(name: impl Into<String>) -> Self {
        StateId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for StateId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId(s.to_string())
    }
}

impl From<String> for StateId {
    fn from(s: String) -> Self {
        StateId(s)
    }
}

impl From<&StateId> for StateId {
    fn from(s: &StateId) -> Self {
        s.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "pars")]
    Probabilistic,
    #[serde(rename = "ars")]
    Plain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub from: StateId,
    pub to: StateId,
    /// `None` for plain systems.
    pub p: Option<Prob>,
}

// ---------------------------------------------------------------------------
// Document form

/// The JSON document form of a system, before validation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub kind: Option<Kind>,
    pub states: Vec<String>,
    #[serde(default)]
    pub rules: Vec<RuleDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roots: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDocument {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
}

impl SystemDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn kind(&self) -> Kind {
        self.kind.unwrap_or(Kind::Probabilistic)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum IssueCode {
    DistributionSum,
    ZeroProbabilityEdge,
    ProbabilityOutOfRange,
    BadProbability,
    MissingProbability,
    IgnoredProbability,
    UndeclaredState,
    DuplicateState,
    DuplicateRule,
    EmptyStateName,
    UndeclaredRoot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(mut issues: Vec<Issue>) -> Self {
        issues.sort_by(|a, b| {
            (a.severity, &a.location, a.code).cmp(&(b.severity, &b.location, b.code))
        });
        let ok = issues.iter().all(|i| i.severity != Severity::Error);
        ValidationReport { ok, issues }
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn summary(&self) -> String {
        let msgs: Vec<String> = self
            .errors()
            .map(|i| format!("{:?} at {}: {}", i.code, i.location, i.message))
            .collect();
        if msgs.is_empty() {
            "no errors".to_string()
        } else {
            msgs.join("; ")
        }
    }
}

fn issue(code: IssueCode, location: impl Into<String>, message: impl Into<String>) -> Issue {
    let severity = match code {
        IssueCode::IgnoredProbability => Severity::Warning,
        _ => Severity::Error,
    };
    Issue {
        severity,
        code,
        location: location.into(),
        message: message.into(),
    }
}

/// Checks a document: endpoint declaration, duplicates, probability range and
/// exact per-state distribution sums.
pub fn validate(doc: &SystemDocument) -> ValidationReport {
    validate_parsed(doc).0
}

type ParsedRules = Vec<(String, String, Option<Prob>)>;

fn validate_parsed(doc: &SystemDocument) -> (ValidationReport, ParsedRules) {
    let kind = doc.kind();
    let mut issues = Vec::new();
    let mut declared = BTreeSet::new();
    for s in &doc.states {
        if s.is_empty() {
            issues.push(issue(IssueCode::EmptyStateName, "states", "state names must be nonempty"));
        }
        if !declared.insert(s.as_str()) {
            issues.push(issue(IssueCode::DuplicateState, s.clone(), "state declared twice"));
        }
    }

    let mut parsed = Vec::with_capacity(doc.rules.len());
    let mut seen_pairs = BTreeSet::new();
    let mut outgoing: BTreeMap<&str, Prob> = BTreeMap::new();
    let mut has_bad_prob: BTreeSet<&str> = BTreeSet::new();
    for r in &doc.rules {
        let loc = format!("{} -> {}", r.from, r.to);
        for end in [&r.from, &r.to] {
            if !declared.contains(end.as_str()) {
                issues.push(issue(
                    IssueCode::UndeclaredState,
                    loc.clone(),
                    format!("endpoint {end:?} is not a declared state"),
                ));
            }
        }
        if !seen_pairs.insert((r.from.as_str(), r.to.as_str())) {
            issues.push(issue(
                IssueCode::DuplicateRule,
                loc.clone(),
                "parallel rule between the same pair; merge the mass into one rule",
            ));
        }
        let p = match (kind, &r.p) {
            (Kind::Plain, None) => None,
            (Kind::Plain, Some(_)) => {
                issues.push(issue(
                    IssueCode::IgnoredProbability,
                    loc.clone(),
                    "probability on a plain ARS rule is ignored",
                ));
                None
            }
            (Kind::Probabilistic, None) => {
                issues.push(issue(IssueCode::MissingProbability, loc.clone(), "rule has no probability"));
                has_bad_prob.insert(r.from.as_str());
                None
            }
            (Kind::Probabilistic, Some(text)) => match parse_prob(text) {
                Err(_) => {
                    issues.push(issue(
                        IssueCode::BadProbability,
                        loc.clone(),
                        format!("cannot parse probability {text:?}"),
                    ));
                    has_bad_prob.insert(r.from.as_str());
                    None
                }
                Ok(p) => {
                    if p.is_zero() {
                        issues.push(issue(
                            IssueCode::ZeroProbabilityEdge,
                            loc.clone(),
                            "a reduction must carry positive probability",
                        ));
                    } else if p.is_negative() || p > Prob::one() {
                        issues.push(issue(
                            IssueCode::ProbabilityOutOfRange,
                            loc.clone(),
                            format!("probability {} outside (0, 1]", format_prob(&p)),
                        ));
                    }
                    *outgoing.entry(r.from.as_str()).or_insert_with(Prob::zero) += &p;
                    Some(p)
                }
            },
        };
        parsed.push((r.from.clone(), r.to.clone(), p));
    }

    if kind == Kind::Probabilistic {
        for (state, sum) in &outgoing {
            if has_bad_prob.contains(state) {
                continue;
            }
            if !sum.is_one() {
                issues.push(issue(
                    IssueCode::DistributionSum,
                    (*state).to_string(),
                    format!("outgoing probabilities sum to {}, not 1", format_prob(sum)),
                ));
            }
        }
    }

    for root in doc.roots.iter().flatten() {
        if !declared.contains(root.as_str()) {
            issues.push(issue(IssueCode::UndeclaredRoot, root.clone(), "root is not a declared state"));
        }
    }

    (ValidationReport::from_issues(issues), parsed)
}

// ---------------------------------------------------------------------------
// Pars

/// A finite, validated ARS or PARS. Immutable once built.
///
/// States are kept in lexicographic order and addressed internally by their
/// position in that order; every successor list is sorted the same way.
#[derive(Clone, Debug)]
pub struct Pars {
    kind: Kind,
    states: Vec<StateId>,
    index: HashMap<StateId, usize>,
    succ: Vec<Vec<(usize, Option<Prob>)>>,
    roots: Vec<StateId>,
}

impl PartialEq for Pars {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.states == other.states
            && self.succ == other.succ
            && self.roots == other.roots
    }
}

impl Pars {
    pub fn from_document(doc: &SystemDocument) -> Result<Self> {
        let (report, parsed) = validate_parsed(doc);
        if !report.ok {
            return Err(Error::Validation(report));
        }
        let roots = doc.roots.clone().unwrap_or_default();
        Ok(Self::assemble(doc.kind(), doc.states.iter().cloned(), parsed, roots))
    }

    /// Builds and validates a probabilistic system.
    pub fn probabilistic<S, R, A, B>(states: S, rules: R) -> Result<Self>
    where
        S: IntoIterator,
        S::Item: Into<String>,
        R: IntoIterator<Item = (A, B, Prob)>,
        A: Into<String>,
        B: Into<String>,
    {
        let doc = SystemDocument {
            kind: Some(Kind::Probabilistic),
            states: states.into_iter().map(Into::into).collect(),
            rules: rules
                .into_iter()
                .map(|(a, b, p)| RuleDocument {
                    from: a.into(),
                    to: b.into(),
                    p: Some(format_prob(&p)),
                })
                .collect(),
            roots: None,
        };
        Self::from_document(&doc)
    }

    /// Builds a plain ARS (no probabilities).
    pub fn plain<S, R, A, B>(states: S, rules: R) -> Result<Self>
    where
        S: IntoIterator,
        S::Item: Into<String>,
        R: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let doc = SystemDocument {
            kind: Some(Kind::Plain),
            states: states.into_iter().map(Into::into).collect(),
            rules: rules
                .into_iter()
                .map(|(a, b)| RuleDocument {
                    from: a.into(),
                    to: b.into(),
                    p: None,
                })
                .collect(),
            roots: None,
        };
        Self::from_document(&doc)
    }

    pub(crate) fn assemble(
        kind: Kind,
        states: impl IntoIterator<Item = String>,
        rules: ParsedRules,
        roots: Vec<String>,
    ) -> Self {
        let mut names: Vec<StateId> = states.into_iter().map(StateId).collect();
        names.sort();
        names.dedup();
        let index: HashMap<StateId, usize> =
            names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut succ = vec![Vec::new(); names.len()];
        for (from, to, p) in rules {
            let f = index[from.as_str()];
            let t = index[to.as_str()];
            succ[f].push((t, p));
        }
        for list in &mut succ {
            list.sort_by_key(|(t, _)| *t);
        }
        let mut roots: Vec<StateId> = roots.into_iter().map(StateId).collect();
        roots.sort();
        roots.dedup();
        Pars {
            kind,
            states: names,
            index,
            succ,
            roots,
        }
    }

    /// Same reduction relation with the probabilities dropped.
    pub fn underlying_ars(&self) -> Pars {
        let mut plain = self.clone();
        plain.kind = Kind::Plain;
        for list in &mut plain.succ {
            for (_, p) in list.iter_mut() {
                *p = None;
            }
        }
        plain
    }

    pub fn with_roots(mut self, roots: impl IntoIterator<Item = StateId>) -> Result<Self> {
        let mut roots: Vec<StateId> = roots.into_iter().collect();
        for r in &roots {
            self.require(r)?;
        }
        roots.sort();
        roots.dedup();
        self.roots = roots;
        Ok(self)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn is_probabilistic(&self) -> bool {
        self.kind == Kind::Probabilistic
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn roots(&self) -> &[StateId] {
        &self.roots
    }

    pub fn state(&self, i: usize) -> &StateId {
        &self.states[i]
    }

    pub fn index_of(&self, s: &StateId) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn require(&self, s: &StateId) -> Result<usize> {
        self.index_of(s).ok_or_else(|| Error::UnknownState(s.clone()))
    }

    pub fn contains(&self, s: &StateId) -> bool {
        self.index.contains_key(s)
    }

    pub fn successors(&self, i: usize) -> &[(usize, Option<Prob>)] {
        &self.succ[i]
    }

    pub fn successor_ids(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ[i].iter().map(|(t, _)| *t)
    }

    /// Successors with probabilities. Only meaningful for probabilistic systems.
    pub(crate) fn weighted(&self, i: usize) -> impl Iterator<Item = (usize, &Prob)> + '_ {
        self.succ[i]
            .iter()
            .map(|(t, p)| (*t, p.as_ref().expect("probabilistic system carries probabilities")))
    }

    pub fn rule_probability(&self, from: usize, to: usize) -> Option<&Prob> {
        let list = &self.succ[from];
        list.binary_search_by_key(&to, |(t, _)| *t)
            .ok()
            .and_then(|k| list[k].1.as_ref())
    }

    pub fn has_rule(&self, from: usize, to: usize) -> bool {
        self.succ[from].binary_search_by_key(&to, |(t, _)| *t).is_ok()
    }

    pub fn is_normal_form_idx(&self, i: usize) -> bool {
        self.succ[i].is_empty()
    }

    pub fn rule_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn rules(&self) -> impl Iterator<Item = Rule> + '_ {
        self.succ.iter().enumerate().flat_map(move |(f, list)| {
            list.iter().map(move |(t, p)| Rule {
                from: self.states[f].clone(),
                to: self.states[*t].clone(),
                p: p.clone(),
            })
        })
    }

    /// States with no outgoing rule.
    pub fn normal_forms(&self) -> BTreeSet<StateId> {
        (0..self.len())
            .filter(|&i| self.is_normal_form_idx(i))
            .map(|i| self.states[i].clone())
            .collect()
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            kind: Some(self.kind),
            states: self.states.iter().map(|s| s.0.clone()).collect(),
            rules: self
                .rules()
                .map(|r| RuleDocument {
                    from: r.from.0,
                    to: r.to.0,
                    p: r.p.as_ref().map(format_prob),
                })
                .collect(),
            roots: if self.roots.is_empty() {
                None
            } else {
                Some(self.roots.iter().map(|s| s.0.clone()).collect())
            },
        }
    }

    /// Canonical pretty JSON: sorted states and rules, trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document()).expect("document serializes");
        out.push('\n');
        out
    }
}

pub fn load_system(text: &str) -> Result<Pars> {
    Pars::from_document(&SystemDocument::from_json(text)?)
}

pub fn normal_forms(system: &Pars) -> BTreeSet<StateId> {
    system.normal_forms()
}

// ---------------------------------------------------------------------------
// Finite and explored views

/// Anything the analyses can run on: a finite system plus the (possibly
/// empty) set of states whose successors were never expanded.
pub trait Analyzable {
    fn system(&self) -> &Pars;
    fn frontier_mask(&self) -> Option<&[bool]>;

    /// Exploration depth, for windows of generated systems.
    fn window_depth(&self) -> Option<usize> {
        None
    }

    fn is_frontier(&self, i: usize) -> bool {
        self.frontier_mask().is_some_and(|m| m[i])
    }

    fn frontier_states(&self) -> Vec<StateId> {
        let sys = self.system();
        match self.frontier_mask() {
            None => Vec::new(),
            Some(m) => (0..sys.len()).filter(|&i| m[i]).map(|i| sys.state(i).clone()).collect(),
        }
    }

    fn has_frontier(&self) -> bool {
        self.frontier_mask().is_some_and(|m| m.iter().any(|&b| b))
    }

    /// Out-degree zero and not an unexpanded frontier state.
    fn is_terminal(&self, i: usize) -> bool {
        self.system().is_normal_form_idx(i) && !self.is_frontier(i)
    }
}

impl Analyzable for Pars {
    fn system(&self) -> &Pars {
        self
    }

    fn frontier_mask(&self) -> Option<&[bool]> {
        None
    }
}

/// Analytic data about the unique infinite path from a state: the first `n`
/// step probabilities along it and an upper bound on the sum of the
/// complements `1 - p_i` of all later steps (`None` if not summable).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinglePathTail {
    pub factors: Vec<Prob>,
    pub tail_bound: Option<Prob>,
}

pub type SuccessorFn = Arc<dyn Fn(&StateId) -> Vec<(StateId, Prob)> + Send + Sync>;
pub type InfinitePathFn = Arc<dyn Fn(&StateId, usize) -> Option<SinglePathTail> + Send + Sync>;

/// A countable system given intensionally by its successor function.
#[derive(Clone)]
pub struct GeneratedPars {
    pub name: String,
    pub roots: Vec<StateId>,
    successors: SuccessorFn,
    infinite_path: Option<InfinitePathFn>,
}

impl fmt::Debug for GeneratedPars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratedPars")
            .field("name", &self.name)
            .field("roots", &self.roots)
            .field("infinite_path", &self.infinite_path.is_some())
            .finish()
    }
}

impl GeneratedPars {
    pub fn new<F>(name: impl Into<String>, roots: Vec<StateId>, successors: F) -> Self
    where
        F: Fn(&StateId) -> Vec<(StateId, Prob)> + Send + Sync + 'static,
    {
        GeneratedPars {
            name: name.into(),
            roots,
            successors: Arc::new(successors),
            infinite_path: None,
        }
    }

    /// Attaches the single-infinite-path annotation used by divergence brackets.
    pub fn with_infinite_path<F>(mut self, f: F) -> Self
    where
        F: Fn(&StateId, usize) -> Option<SinglePathTail> + Send + Sync + 'static,
    {
        self.infinite_path = Some(Arc::new(f));
        self
    }

    pub fn successors(&self, s: &StateId) -> Vec<(StateId, Prob)> {
        (self.successors)(s)
    }

    pub fn infinite_path(&self, s: &StateId, n: usize) -> Option<SinglePathTail> {
        self.infinite_path.as_ref().and_then(|f| f(s, n))
    }

    /// Wraps a finite system; exploration of it never produces a frontier
    /// once the depth exceeds its diameter.
    pub fn from_finite(system: &Pars, roots: Vec<StateId>) -> Self {
        let sys = system.clone();
        GeneratedPars::new("finite", roots, move |s| match sys.index_of(s) {
            None => Vec::new(),
            Some(i) => sys
                .weighted(i)
                .map(|(t, p)| (sys.state(t).clone(), p.clone()))
                .collect(),
        })
    }
}

/// A finite window of a generated system.
#[derive(Clone, Debug)]
pub struct ExploredSystem {
    pub core: Pars,
    pub frontier: BTreeSet<StateId>,
    pub depth: usize,
    mask: Vec<bool>,
}

impl ExploredSystem {
    /// Normal forms of the core, excluding unexpanded frontier states.
    pub fn normal_forms(&self) -> BTreeSet<StateId> {
        (0..self.core.len())
            .filter(|&i| self.is_terminal(i))
            .map(|i| self.core.state(i).clone())
            .collect()
    }

    /// Closes the window: frontier states become plain normal forms.
    pub fn into_closed(self) -> Pars {
        self.core
    }
}

impl Analyzable for ExploredSystem {
    fn system(&self) -> &Pars {
        &self.core
    }

    fn frontier_mask(&self) -> Option<&[bool]> {
        Some(&self.mask)
    }

    fn window_depth(&self) -> Option<usize> {
        Some(self.depth)
    }
}

fn check_distribution(from: &StateId, succ: &[(StateId, Prob)]) -> Result<()> {
    let mut issues = Vec::new();
    let mut sum = Prob::zero();
    let mut seen = BTreeSet::new();
    for (to, p) in succ {
        let loc = format!("{from} -> {to}");
        if !seen.insert(to) {
            issues.push(issue(IssueCode::DuplicateRule, loc.clone(), "successor listed twice"));
        }
        if p.is_zero() {
            issues.push(issue(IssueCode::ZeroProbabilityEdge, loc, "zero-probability successor"));
        } else if p.is_negative() || *p > Prob::one() {
            issues.push(issue(IssueCode::ProbabilityOutOfRange, loc, "probability outside (0, 1]"));
        }
        sum += p;
    }
    if !sum.is_one() {
        issues.push(issue(
            IssueCode::DistributionSum,
            from.to_string(),
            format!("generated successors sum to {}", format_prob(&sum)),
        ));
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(ValidationReport::from_issues(issues)))
    }
}

/// Breadth-first expansion from the roots. Reducible states at distance
/// exactly `depth` are left unexpanded and reported as the frontier.
pub fn explore(g: &GeneratedPars, depth: usize) -> Result<ExploredSystem> {
    let mut dist: BTreeMap<StateId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for r in &g.roots {
        if !dist.contains_key(r) {
            dist.insert(r.clone(), 0);
            queue.push_back(r.clone());
        }
    }
    let mut rules: ParsedRules = Vec::new();
    let mut frontier = BTreeSet::new();
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        let succ = g.successors(&u);
        if succ.is_empty() {
            continue;
        }
        check_distribution(&u, &succ)?;
        if d >= depth {
            frontier.insert(u);
            continue;
        }
        for (v, p) in succ {
            if !dist.contains_key(&v) {
                dist.insert(v.clone(), d + 1);
                queue.push_back(v.clone());
            }
            rules.push((u.0.clone(), v.0, Some(p)));
        }
    }
    let roots = g.roots.iter().map(|r| r.0.clone()).collect();
    let core = Pars::assemble(
        Kind::Probabilistic,
        dist.keys().map(|s| s.0.clone()),
        rules,
        roots,
    );
    let mask = core.states().iter().map(|s| frontier.contains(s)).collect();
    Ok(ExploredSystem {
        core,
        frontier,
        depth,
        mask,
    })
}
