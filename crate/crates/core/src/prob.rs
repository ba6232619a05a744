//! Exact path, reaching and divergence probabilities, and the almost-sure
//! property checks built on them.
//!
//! Two independent routes compute reaching probabilities on finite systems:
//! [`absorption_solve`] inverts the one-step fixed-point equations with exact
//! Gaussian elimination, and [`pn_iterate`] pushes probability mass forward
//! one reduction at a time. The tests check each against the other.

use std::collections::{BTreeMap, VecDeque};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::ars::{self, BitSet, Decision, NfEvidence, Property, Verdict, Witness};
use crate::error::{Error, Result};
use crate::linsolve::{self, SparseRow};
use crate::rational::{format_prob, Prob};
use crate::system::{explore, Analyzable, GeneratedPars, Pars, StateId};

fn require_probabilistic(sys: &Pars) -> Result<()> {
    if sys.is_probabilistic() {
        Ok(())
    } else {
        Err(Error::NotProbabilistic)
    }
}

/// Product of the rule probabilities along `path`. A single state is the
/// empty path and has probability one.
pub fn path_probability(system: &Pars, path: &[StateId]) -> Result<Prob> {
    require_probabilistic(system)?;
    let first = path.first().ok_or(Error::EmptyPath)?;
    let mut prev = system.require(first)?;
    let mut acc = Prob::one();
    for s in &path[1..] {
        let next = system.require(s)?;
        let p = system
            .rule_probability(prev, next)
            .ok_or_else(|| Error::NotAPath(system.state(prev).clone(), s.clone()))?;
        acc *= p;
        prev = next;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Step-indexed distribution

/// Distribution over paths of length at most `n` from a start state: mass
/// already absorbed in each normal form, and mass on length-`n` paths that
/// still end in a reducible (or unexpanded) state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PnState {
    pub n: usize,
    #[serde(with = "crate::rational::serde_prob_map")]
    pub settled: BTreeMap<StateId, Prob>,
    #[serde(with = "crate::rational::serde_prob_map")]
    pub alive: BTreeMap<StateId, Prob>,
}

impl PnState {
    pub fn settled_total(&self) -> Prob {
        self.settled.values().fold(Prob::zero(), |acc, p| acc + p)
    }

    pub fn alive_total(&self) -> Prob {
        self.alive.values().fold(Prob::zero(), |acc, p| acc + p)
    }
}

fn pn_initial<A: Analyzable>(system: &A, start: &StateId) -> Result<(Vec<Prob>, Vec<Prob>)> {
    let sys = system.system();
    require_probabilistic(sys)?;
    let s = sys.require(start)?;
    let mut settled = vec![Prob::zero(); sys.len()];
    let mut alive = vec![Prob::zero(); sys.len()];
    if system.is_terminal(s) {
        settled[s] = Prob::one();
    } else {
        alive[s] = Prob::one();
    }
    Ok((settled, alive))
}

fn pn_step<A: Analyzable>(system: &A, settled: &mut [Prob], alive: &mut Vec<Prob>) {
    let sys = system.system();
    let mut next = vec![Prob::zero(); sys.len()];
    for (u, mass) in alive.iter().enumerate() {
        if mass.is_zero() {
            continue;
        }
        if system.is_frontier(u) {
            next[u] += mass;
            continue;
        }
        for (v, p) in sys.weighted(u) {
            let flow = mass * p;
            if system.is_terminal(v) {
                settled[v] += flow;
            } else {
                next[v] += flow;
            }
        }
    }
    *alive = next;
}

fn pn_snapshot(sys: &Pars, n: usize, settled: &[Prob], alive: &[Prob]) -> PnState {
    let collect = |v: &[Prob]| {
        v.iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(i, p)| (sys.state(i).clone(), p.clone()))
            .collect()
    };
    PnState {
        n,
        settled: collect(settled),
        alive: collect(alive),
    }
}

/// Exact step-`n` distribution. Unexpanded frontier states keep their mass
/// in `alive`.
pub fn pn_iterate<A: Analyzable>(system: &A, start: &StateId, n: usize) -> Result<PnState> {
    let (mut settled, mut alive) = pn_initial(system, start)?;
    for _ in 0..n {
        pn_step(system, &mut settled, &mut alive);
    }
    Ok(pn_snapshot(system.system(), n, &settled, &alive))
}

/// Every step `0..=n` of [`pn_iterate`].
pub fn pn_trace<A: Analyzable>(system: &A, start: &StateId, n: usize) -> Result<Vec<PnState>> {
    let (mut settled, mut alive) = pn_initial(system, start)?;
    let sys = system.system();
    let mut out = vec![pn_snapshot(sys, 0, &settled, &alive)];
    for k in 1..=n {
        pn_step(system, &mut settled, &mut alive);
        out.push(pn_snapshot(sys, k, &settled, &alive));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reaching probabilities

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Interval {
    #[serde(with = "crate::rational::serde_prob")]
    pub lo: Prob,
    #[serde(with = "crate::rational::serde_prob")]
    pub hi: Prob,
}

impl Interval {
    pub fn width(&self) -> Prob {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Prob) -> bool {
        self.lo <= *x && *x <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum DivergenceValue {
    Exact(#[serde(with = "crate::rational::serde_prob")] Prob),
    Bounds(Interval),
}

impl DivergenceValue {
    pub fn exact(&self) -> Option<&Prob> {
        match self {
            DivergenceValue::Exact(p) => Some(p),
            DivergenceValue::Bounds(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Solve,
    Iterate,
    Bracket,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReachReport {
    pub start: StateId,
    /// Exact values for `solve`; lower bounds for `iterate` and `bracket`.
    #[serde(with = "crate::rational::serde_prob_map")]
    pub reach: BTreeMap<StateId, Prob>,
    pub divergence: DivergenceValue,
    pub method: Method,
}

impl ReachReport {
    pub fn reach_total(&self) -> Prob {
        self.reach.values().fold(Prob::zero(), |acc, p| acc + p)
    }

    /// `Some(t)` when the report puts all mass on the single normal form `t`.
    pub fn point_mass(&self) -> Option<&StateId> {
        match (self.reach.len(), self.reach.iter().next()) {
            (1, Some((t, p))) if p.is_one() => Some(t),
            _ => None,
        }
    }
}

/// Orders the unknowns breadth-first along the rule graph so chains stay
/// banded during elimination.
fn elimination_order(sys: &Pars, include: &[bool]) -> Vec<usize> {
    let n = sys.len();
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    for root in 0..n {
        if !include[root] || seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for v in sys.successor_ids(u) {
                if include[v] && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order
}

/// Per-state vectors of exact reaching probabilities, indexed by state.
pub(crate) fn solve_reach(sys: &Pars, rows: &[BitSet]) -> Vec<BTreeMap<usize, Prob>> {
    let n = sys.len();
    let is_nf: Vec<bool> = (0..n).map(|i| sys.is_normal_form_idx(i)).collect();
    let unknown: Vec<bool> = (0..n)
        .map(|i| !is_nf[i] && rows[i].iter().any(|j| is_nf[j]))
        .collect();
    let order = elimination_order(sys, &unknown);
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    let mut a = Vec::with_capacity(order.len());
    let mut b = Vec::with_capacity(order.len());
    for &u in &order {
        let mut row = SparseRow::new();
        let mut rhs = SparseRow::new();
        row.insert(pos[u], Prob::one());
        for (v, p) in sys.weighted(u) {
            if is_nf[v] {
                *rhs.entry(v).or_insert_with(Prob::zero) += p;
            } else if unknown[v] {
                let e = row.entry(pos[v]).or_insert_with(Prob::zero);
                *e -= p;
                if e.is_zero() {
                    row.remove(&pos[v]);
                }
            }
        }
        a.push(row);
        b.push(rhs);
    }
    let x = linsolve::solve(a, b).expect("absorbing sub-chain has a nonsingular system");
    let mut out = vec![BTreeMap::new(); n];
    for i in 0..n {
        if is_nf[i] {
            out[i].insert(i, Prob::one());
        } else if unknown[i] {
            out[i] = x[pos[i]].clone();
        }
    }
    out
}

fn report_from(sys: &Pars, i: usize, vec: &BTreeMap<usize, Prob>) -> ReachReport {
    let reach: BTreeMap<StateId, Prob> = vec
        .iter()
        .map(|(&j, p)| (sys.state(j).clone(), p.clone()))
        .collect();
    let total = reach.values().fold(Prob::zero(), |acc, p| acc + p);
    ReachReport {
        start: sys.state(i).clone(),
        reach,
        divergence: DivergenceValue::Exact(Prob::one() - total),
        method: Method::Solve,
    }
}

/// Exact reaching probabilities `P(s ->* t)` and divergence for every state.
pub fn absorption_solve(system: &Pars) -> Result<BTreeMap<StateId, ReachReport>> {
    require_probabilistic(system)?;
    let rows = ars::closure_rows(system);
    let solved = solve_reach(system, &rows);
    Ok((0..system.len())
        .map(|i| (system.state(i).clone(), report_from(system, i, &solved[i])))
        .collect())
}

/// `P(s ->* t)`. The target must be a normal form reachable from `s`.
pub fn reach_probability(system: &Pars, s: &StateId, t: &StateId) -> Result<Prob> {
    require_probabilistic(system)?;
    system.require(s)?;
    let ti = system.require(t)?;
    if !system.is_normal_form_idx(ti) {
        return Err(Error::TargetNotNormalForm(t.clone()));
    }
    let report = absorption_solve(system)?.remove(s).expect("known state");
    report.reach.get(t).cloned().ok_or_else(|| Error::TargetUnreachable {
        start: s.clone(),
        target: t.clone(),
    })
}

/// Brackets the infinite product of one infinite path's step probabilities
/// from its first `factors.len()` factors and a bound `T` on the remaining
/// complements, using `prod_{i>N} p_i >= 1 - T`. Without a tail bound the
/// lower end is zero.
pub fn single_path_divergence_bounds(factors: &[Prob], tail_bound: Option<&Prob>) -> Result<Interval> {
    if let Some(bad) = factors.iter().find(|p| !crate::rational::is_probability(p)) {
        return Err(Error::Precondition(format!(
            "path factor {} is not in (0, 1]",
            format_prob(bad)
        )));
    }
    let hi = factors.iter().fold(Prob::one(), |acc, p| acc * p);
    let lo = match tail_bound {
        None => Prob::zero(),
        Some(t) => {
            if *t < Prob::zero() || *t >= Prob::one() {
                return Err(Error::TailBoundInvalid(format_prob(t)));
            }
            &hi * (Prob::one() - t)
        }
    };
    Ok(Interval { lo, hi })
}

/// Certified bounds on `P(start -> inf)` for a generated system.
///
/// The upper end is the still-alive mass after `n` steps. The lower end is
/// the mass that, inside the explored window, can never reach a normal form
/// or the frontier. When the system carries a single-infinite-path
/// annotation for `start`, the infinite-product bounds tighten both ends.
pub fn divergence_bracket(g: &GeneratedPars, start: &StateId, depth: usize, n: usize) -> Result<ReachReport> {
    let window = explore(g, depth)?;
    let pn = pn_iterate(&window, start, n)?;
    let mut hi = pn.alive_total();

    let closed = &window.core;
    let rows = ars::closure_rows(closed);
    let solved = solve_reach(closed, &rows);
    let s = closed.require(start)?;
    let escaping = solved[s].values().fold(Prob::zero(), |acc, p| acc + p);
    let mut lo = Prob::one() - escaping;

    if let Some(tail) = g.infinite_path(start, n) {
        let bounds = single_path_divergence_bounds(&tail.factors, tail.tail_bound.as_ref())?;
        if bounds.lo > lo {
            lo = bounds.lo;
        }
        if bounds.hi < hi {
            hi = bounds.hi;
        }
    }
    debug_assert!(lo <= hi, "divergence bracket inverted");

    Ok(ReachReport {
        start: start.clone(),
        reach: pn.settled,
        divergence: DivergenceValue::Bounds(Interval { lo, hi }),
        method: Method::Bracket,
    })
}

// ---------------------------------------------------------------------------
// Almost-sure properties (finite systems)

struct Solved<'a> {
    sys: &'a Pars,
    rows: Vec<BitSet>,
    reach: Vec<BTreeMap<usize, Prob>>,
}

impl<'a> Solved<'a> {
    fn new<A: Analyzable>(system: &'a A, property: Property) -> Result<std::result::Result<Self, Decision>> {
        if system.has_frontier() {
            return Ok(Err(Decision::frontier(property, system.frontier_states())));
        }
        let sys = system.system();
        require_probabilistic(sys)?;
        let rows = ars::closure_rows(sys);
        let reach = solve_reach(sys, &rows);
        Ok(Ok(Solved { sys, rows, reach }))
    }

    fn point_mass(&self, i: usize) -> Option<usize> {
        match self.reach[i].iter().next() {
            Some((&t, p)) if self.reach[i].len() == 1 && p.is_one() => Some(t),
            _ => None,
        }
    }

    fn divergence(&self, i: usize) -> Prob {
        Prob::one() - self.reach[i].values().fold(Prob::zero(), |acc, p| acc + p)
    }

    fn reach_map(&self, i: usize) -> BTreeMap<StateId, Prob> {
        self.reach[i]
            .iter()
            .map(|(&j, p)| (self.sys.state(j).clone(), p.clone()))
            .collect()
    }

    fn reach_peak(&self, s: usize, a: usize, b: usize) -> Witness {
        Witness::ReachPeak {
            source: self.sys.state(s).clone(),
            left: self.sys.state(a).clone(),
            right: self.sys.state(b).clone(),
            left_reach: self.reach_map(a),
            right_reach: self.reach_map(b),
        }
    }

    /// First pair `a <= b` in `ends` without a common normal form reached
    /// with probability one from both.
    fn failing_pair(&self, ends: &[usize]) -> Option<(usize, usize)> {
        let pm: Vec<Option<usize>> = ends.iter().map(|&e| self.point_mass(e)).collect();
        // distinct ends first, so a genuine fork is reported over a diagonal peak
        for k in 0..ends.len() {
            for l in k + 1..ends.len() {
                match (pm[k], pm[l]) {
                    (Some(x), Some(y)) if x == y => {}
                    _ => return Some((ends[k], ends[l])),
                }
            }
        }
        (0..ends.len()).find(|&k| pm[k].is_none()).map(|k| (ends[k], ends[k]))
    }
}

/// Every state has divergence zero. On a finite chain this holds exactly
/// when every state can reach a normal form; both criteria are computed and
/// must agree.
pub fn check_as_termination<A: Analyzable>(system: &A) -> Result<Decision> {
    let solved = match Solved::new(system, Property::AsTermination)? {
        Ok(s) => s,
        Err(d) => return Ok(d),
    };
    let structural = (0..solved.sys.len()).all(|i| solved.rows[i].iter().any(|j| solved.sys.is_normal_form_idx(j)));
    let witness = (0..solved.sys.len())
        .map(|i| (i, solved.divergence(i)))
        .find(|(_, d)| !d.is_zero())
        .map(|(i, divergence)| Witness::Divergence {
            state: solved.sys.state(i).clone(),
            divergence,
        });
    assert_eq!(
        structural,
        witness.is_none(),
        "structural and numeric almost-sure termination disagree"
    );
    Ok(Decision::from_witness(Property::AsTermination, witness))
}

/// Every one-step peak `s1 <- s -> s2` (including `s1 = s2`) has a normal
/// form reached with probability one from both ends.
pub fn check_as_local_convergence<A: Analyzable>(system: &A) -> Result<Decision> {
    let solved = match Solved::new(system, Property::AsLocalConvergence)? {
        Ok(s) => s,
        Err(d) => return Ok(d),
    };
    let witness = (0..solved.sys.len()).find_map(|s| {
        let succ: Vec<usize> = solved.sys.successor_ids(s).collect();
        solved.failing_pair(&succ).map(|(a, b)| solved.reach_peak(s, a, b))
    });
    Ok(Decision::from_witness(Property::AsLocalConvergence, witness))
}

/// Every multi-step peak `s1 <-* s ->* s2` has a normal form reached with
/// probability one from both ends. Evaluated directly from the reaching
/// probabilities; the notes record the verdicts of almost-sure termination
/// and confluence for comparison.
pub fn check_as_convergence<A: Analyzable>(system: &A) -> Result<Decision> {
    let solved = match Solved::new(system, Property::AsConvergence)? {
        Ok(s) => s,
        Err(d) => return Ok(d),
    };
    let witness = (0..solved.sys.len()).find_map(|s| {
        let cone: Vec<usize> = solved.rows[s].iter().collect();
        solved.failing_pair(&cone).map(|(a, b)| solved.reach_peak(s, a, b))
    });
    let mut decision = Decision::from_witness(Property::AsConvergence, witness);
    let term = check_as_termination(system)?;
    let confl = ars::check_confluence(system);
    decision.notes.push(format!("as_termination: {}", term.verdict.symbol()));
    decision.notes.push(format!("confluence: {}", confl.verdict.symbol()));
    if decision.verdict == Verdict::No {
        let failed: Vec<&str> = [(&term, "as_termination"), (&confl, "confluence")]
            .into_iter()
            .filter(|(d, _)| !d.is_yes())
            .map(|(_, name)| name)
            .collect();
        decision.notes.push(format!("failed conjuncts: {}", failed.join(", ")));
    }
    Ok(decision)
}

/// Every state reaches some normal form with positive probability; the
/// evidence lists the smallest such normal form per state.
pub fn check_prob_normalizing<A: Analyzable>(system: &A) -> Result<Decision> {
    let solved = match Solved::new(system, Property::ProbNormalization)? {
        Ok(s) => s,
        Err(d) => return Ok(d),
    };
    let mut entries = Vec::new();
    for i in 0..solved.sys.len() {
        match solved.reach[i].iter().find(|(_, p)| !p.is_zero()) {
            Some((&t, p)) => entries.push(NfEvidence {
                state: solved.sys.state(i).clone(),
                normal_form: solved.sys.state(t).clone(),
                probability: p.clone(),
            }),
            None => {
                return Ok(Decision::no(
                    Property::ProbNormalization,
                    Witness::State {
                        state: solved.sys.state(i).clone(),
                    },
                ))
            }
        }
    }
    let mut d = Decision::yes(Property::ProbNormalization);
    d.witness = Some(Witness::Evidence { entries });
    Ok(d)
}

/// The six properties of the overview table, in its row order: local
/// confluence, confluence, termination, a.s. local convergence, a.s.
/// convergence, a.s. termination.
pub fn table_row<A: Analyzable>(system: &A) -> Result<Vec<Decision>> {
    Ok(vec![
        ars::check_local_confluence(system),
        ars::check_confluence(system),
        ars::check_termination(system),
        check_as_local_convergence(system)?,
        check_as_convergence(system)?,
        check_as_termination(system)?,
    ])
}
