//! Built-in systems with their expected properties, analytic values,
//! certificates and transformation mappings.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::ars::{self, Property, Verdict, WindowVerdict};
use crate::certify::{check_lyapunov, CertVerdict, LyapunovCertificate, Valuation};
use crate::error::{Error, Result};
use crate::prob::{self, DivergenceValue};
use crate::rational::{format_prob, inverse_power, one, ratio, Prob};
use crate::system::{explore, Analyzable, GeneratedPars, Pars, SinglePathTail, StateId};
use crate::transform::{Mode, TransformMapping};

pub const NAMES: [&str; 10] = [
    "loop_a",
    "coin_b",
    "hindley_c",
    "ladder_d",
    "ladder_dprime",
    "random_walk",
    "herman3",
    "herman3_pruned",
    "herman_quotient",
    "sec4_example",
];

/// Largest ring accepted by [`herman_ring`]; the state space is `2^n`.
pub const MAX_RING: usize = 12;

#[derive(Clone, Debug)]
pub enum CorpusSystem {
    Finite(Pars),
    Generated(GeneratedPars),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AnnotationValue {
    Exact(#[serde(with = "crate::rational::serde_prob")] Prob),
    Approx(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Annotation {
    pub key: String,
    pub value: AnnotationValue,
    pub note: String,
}

/// A property asserted for an infinite system by a written argument. Finite
/// windows can refute it but never confirm it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Claim {
    pub property: Property,
    pub verdict: Verdict,
    pub argument: String,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub system: CorpusSystem,
    /// Expected verdicts in overview-table order; plain systems list only
    /// the structural properties.
    pub expected: Vec<(Property, Verdict)>,
    pub annotations: Vec<Annotation>,
    pub claims: Vec<Claim>,
    pub certificate: Option<LyapunovCertificate>,
    pub mapping: Option<TransformMapping>,
    /// Which overview-table column the entry stands for, where applicable.
    pub binding: Option<&'static str>,
}

impl CorpusEntry {
    pub fn finite(&self) -> Option<&Pars> {
        match &self.system {
            CorpusSystem::Finite(p) => Some(p),
            CorpusSystem::Generated(_) => None,
        }
    }

    pub fn generated(&self) -> Option<&GeneratedPars> {
        match &self.system {
            CorpusSystem::Finite(_) => None,
            CorpusSystem::Generated(g) => Some(g),
        }
    }

    pub fn annotation(&self, key: &str) -> Option<&AnnotationValue> {
        self.annotations.iter().find(|a| a.key == key).map(|a| &a.value)
    }

    pub fn expected_verdict(&self, property: Property) -> Option<Verdict> {
        self.expected.iter().find(|(p, _)| *p == property).map(|(_, v)| *v)
    }

    fn claim(&self, property: Property) -> Option<&Claim> {
        self.claims.iter().find(|c| c.property == property)
    }
}

const TABLE: [Property; 6] = [
    Property::LocalConfluence,
    Property::Confluence,
    Property::Termination,
    Property::AsLocalConvergence,
    Property::AsConvergence,
    Property::AsTermination,
];

fn row(symbols: &str) -> Vec<(Property, Verdict)> {
    let verdicts: Vec<Verdict> = symbols
        .chars()
        .map(|c| if c == '+' { Verdict::Yes } else { Verdict::No })
        .collect();
    TABLE.iter().copied().zip(verdicts).collect()
}

fn exact(key: &str, value: Prob, note: &str) -> Annotation {
    Annotation {
        key: key.into(),
        value: AnnotationValue::Exact(value),
        note: note.into(),
    }
}

fn approx(key: &str, value: f64, note: &str) -> Annotation {
    Annotation {
        key: key.into(),
        value: AnnotationValue::Approx(value),
        note: note.into(),
    }
}

fn claim(property: Property, verdict: Verdict, argument: &str) -> Claim {
    Claim {
        property,
        verdict,
        argument: argument.into(),
    }
}

fn half() -> Prob {
    ratio(1, 2)
}

// ---------------------------------------------------------------------------
// Builders

pub fn loop_a() -> Pars {
    Pars::probabilistic(["0", "1"], [("0", "1", one()), ("1", "1", one())]).expect("static system")
}

pub fn coin_b() -> Pars {
    Pars::probabilistic(["0", "1", "a"], [("0", "1", one()), ("1", "1", half()), ("1", "a", half())])
        .expect("static system")
}

pub fn hindley_c() -> Pars {
    Pars::probabilistic(
        ["a", "0", "1", "b"],
        [("0", "a", half()), ("0", "1", half()), ("1", "0", half()), ("1", "b", half())],
    )
    .expect("static system")
}

/// The loop-or-exit system `0 -> 0 (p)`, `0 -> a (1 - p)` for `0 < p < 1`.
pub fn sec4_example_with(p: Prob) -> Result<Pars> {
    if p <= ratio(0, 1) || p >= one() {
        return Err(Error::Precondition(format!(
            "loop probability must lie strictly between 0 and 1, got {}",
            format_prob(&p)
        )));
    }
    let exit = one() - &p;
    Pars::probabilistic(["0", "a"], [("0", "0", p), ("0", "a", exit)])
}

fn parse_level(s: &StateId) -> Option<u64> {
    s.as_str().parse().ok()
}

fn level(n: u64) -> StateId {
    StateId::new(n.to_string())
}

/// Walk on the naturals: up with 1/3, down with 2/3, and from 0 down to `a`.
pub fn random_walk_generated() -> GeneratedPars {
    GeneratedPars::new("random_walk", vec![level(0)], |s| match parse_level(s) {
        None => Vec::new(),
        Some(n) => {
            let down = if n == 0 { StateId::from("a") } else { level(n - 1) };
            vec![(level(n + 1), ratio(1, 3)), (down, ratio(2, 3))]
        }
    })
}

/// Truncation to levels `0..=n`: the top level only steps down, with
/// probability one. Reaching probabilities of the truncation bound those of
/// the full walk from below.
pub fn random_walk(n: u64) -> Result<Pars> {
    if n == 0 {
        return Err(Error::Precondition("truncation level must be at least 1".into()));
    }
    let mut states: Vec<String> = (0..=n).map(|i| i.to_string()).collect();
    states.push("a".into());
    let mut rules = vec![("0".to_string(), "a".to_string(), ratio(2, 3))];
    for i in 0..=n {
        if i < n {
            rules.push((i.to_string(), (i + 1).to_string(), ratio(1, 3)));
        }
        if i > 0 {
            let p = if i == n { one() } else { ratio(2, 3) };
            rules.push((i.to_string(), (i - 1).to_string(), p));
        }
    }
    Pars::probabilistic(states, rules)
}

/// `G(n) = number`, `G(a) = a` onto `number -> a`, on a truncation.
pub fn random_walk_mapping(n: u64) -> Result<TransformMapping> {
    let source = random_walk(n)?;
    let target = Pars::plain(["number", "a"], [("number", "a")])?;
    let g = source
        .states()
        .iter()
        .map(|s| {
            let image = if s.as_str() == "a" { "a" } else { "number" };
            (s.clone(), StateId::from(image))
        })
        .collect();
    TransformMapping::new(source, target, g, Mode::Cprime)
}

/// The ladder `i -> i+1`, `i -> a`, with the exit probability from level
/// `i` given by `exit(i)`.
fn ladder(name: &str, exit: fn(u64) -> Prob) -> GeneratedPars {
    GeneratedPars::new(name, vec![level(0)], move |s| match parse_level(s) {
        None => Vec::new(),
        Some(i) => {
            let q = exit(i);
            vec![(level(i + 1), one() - &q), (StateId::from("a"), q)]
        }
    })
}

fn ladder_d_exit(i: u64) -> Prob {
    inverse_power(4, i as usize + 1)
}

/// Ladder with exit probability `4^-(i+1)` from level `i`. The unique
/// infinite path from level `s` has factors `1 - 4^-(s+k)`, and the
/// complements after the first `n` sum to `4^-(s+n) / 3`.
pub fn ladder_d() -> GeneratedPars {
    ladder("ladder_d", ladder_d_exit).with_infinite_path(|s, n| {
        let s = parse_level(s)? as usize;
        let factors = (1..=n).map(|k| one() - inverse_power(4, s + k)).collect();
        Some(SinglePathTail {
            factors,
            tail_bound: Some(inverse_power(4, s + n) * ratio(1, 3)),
        })
    })
}

/// Same graph as [`ladder_d`] with every probability 1/2; the infinite path
/// has probability zero and no summable tail.
pub fn ladder_dprime() -> GeneratedPars {
    ladder("ladder_dprime", |_| half()).with_infinite_path(|s, n| {
        parse_level(s)?;
        Some(SinglePathTail {
            factors: vec![half(); n],
            tail_bound: None,
        })
    })
}

fn ring_name(bits: &[bool]) -> String {
    let body: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    format!("[{body}]")
}

fn ring_bits(s: &StateId) -> Option<Vec<bool>> {
    let body = s.as_str().strip_prefix('[')?.strip_suffix(']')?;
    body.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Synchronous token ring of `n` processes. Each token holder keeps its
/// token or passes it to process `i - 1` (cyclically), each with
/// probability 1/2; a kept token meeting an arriving one annihilates both.
pub fn herman_ring(n: usize) -> Result<Pars> {
    if n == 0 || n > MAX_RING {
        return Err(Error::RingSize(n));
    }
    let configs: Vec<Vec<bool>> = (0..1u32 << n)
        .map(|m| (0..n).map(|i| m >> (n - 1 - i) & 1 == 1).collect())
        .collect();
    let mut rules = Vec::new();
    for bits in &configs {
        let holders: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
        if holders.is_empty() {
            continue;
        }
        let share = inverse_power(2, holders.len());
        let mut succ: BTreeMap<String, Prob> = BTreeMap::new();
        for choice in 0..1u32 << holders.len() {
            let mut pass = vec![false; n];
            for (k, &h) in holders.iter().enumerate() {
                pass[h] = choice >> k & 1 == 1;
            }
            let next: Vec<bool> = (0..n)
                .map(|j| {
                    let kept = bits[j] && !pass[j];
                    let incoming = pass[(j + 1) % n];
                    kept != incoming
                })
                .collect();
            *succ.entry(ring_name(&next)).or_insert_with(|| ratio(0, 1)) += &share;
        }
        let from = ring_name(bits);
        rules.extend(succ.into_iter().map(|(to, p)| (from.clone(), to, p)));
    }
    Pars::probabilistic(configs.iter().map(|b| ring_name(b)), rules)
}

/// The three-process ring with the rules of `[100]` removed, so that `[100]`
/// joins `[000]` as a normal form.
pub fn herman_pruned() -> Pars {
    let full = herman_ring(3).expect("ring of three");
    let rules: Vec<_> = full
        .rules()
        .filter(|r| r.from.as_str() != "[100]")
        .map(|r| (r.from.to_string(), r.to.to_string(), r.p.expect("probabilistic")))
        .collect();
    Pars::probabilistic(full.states().iter().map(|s| s.to_string()), rules).expect("pruned ring")
}

/// `odd -> [100]`, `even -> [000]`.
pub fn herman_quotient() -> Pars {
    Pars::plain(["odd", "even", "[100]", "[000]"], [("odd", "[100]"), ("even", "[000]")]).expect("static system")
}

/// Parity map from the pruned ring onto [`herman_quotient`].
pub fn herman_mapping(target: Pars) -> Result<TransformMapping> {
    let source = herman_pruned();
    let g = source
        .states()
        .iter()
        .map(|s| {
            let image = match s.as_str() {
                "[100]" | "[000]" => s.as_str().to_string(),
                _ => {
                    let tokens = ring_bits(s).expect("ring state").iter().filter(|&&b| b).count();
                    if tokens % 2 == 1 { "odd" } else { "even" }.to_string()
                }
            };
            (s.clone(), StateId::new(image))
        })
        .collect();
    TransformMapping::new(source, target, g, Mode::Cprime)
}

// ---------------------------------------------------------------------------
// Valuations

/// `V([b1 b2 b3]) = 4 (b1 + b2 + b3) + b1 + 2 b2 + 4 b3`.
pub fn herman_valuation() -> Valuation {
    Valuation::formula("herman3", |s| {
        let bits = ring_bits(s)?;
        if bits.len() != 3 {
            return None;
        }
        let tokens = bits.iter().filter(|&&b| b).count() as i64;
        let position: i64 = bits.iter().zip([1, 2, 4]).filter(|(b, _)| **b).map(|(_, w)| w).sum();
        Some(ratio(4 * tokens + position, 1))
    })
}

/// `V(n) = n + 2`, `V(a) = 1`.
pub fn random_walk_valuation() -> Valuation {
    Valuation::formula("random_walk", |s| match s.as_str() {
        "a" => Some(one()),
        _ => parse_level(s).map(|n| Prob::from_integer((n + 2).into())),
    })
}

/// `V(n) = 4`, `V(a) = 1`.
pub fn ladder_dprime_valuation() -> Valuation {
    Valuation::formula("ladder_dprime", |s| match s.as_str() {
        "a" => Some(one()),
        _ => parse_level(s).map(|_| ratio(4, 1)),
    })
}

/// Named valuations usable from certificate documents.
pub fn builtin_valuation(name: &str) -> Option<Valuation> {
    match name {
        "herman3" => Some(herman_valuation()),
        "random_walk" => Some(random_walk_valuation()),
        "ladder_dprime" => Some(ladder_dprime_valuation()),
        _ => None,
    }
}

fn sec4_certificate(p: &Prob) -> LyapunovCertificate {
    let v = [(StateId::from("0"), ratio(2, 1)), (StateId::from("a"), one())].into_iter().collect();
    LyapunovCertificate::new(Valuation::Table(v), one() - p)
        .with_argument("2 - (p * 2 + (1 - p) * 1) = 1 - p at the only reducible state")
}

// ---------------------------------------------------------------------------
// Entries

pub fn builtin(name: &str) -> Result<CorpusEntry> {
    let entry = match name {
        "loop_a" => CorpusEntry {
            name: "loop_a",
            description: "0 -> 1 and a self-loop on 1, both with probability 1",
            system: CorpusSystem::Finite(loop_a()),
            expected: row("++----"),
            annotations: vec![exact("divergence(0)", one(), "all mass circulates on 1")],
            claims: vec![],
            certificate: None,
            mapping: None,
            binding: Some("overview column (a): the two-state loop, first subfigure"),
        },
        "coin_b" => CorpusEntry {
            name: "coin_b",
            description: "0 -> 1, then 1 loops or exits to a with probability 1/2 each",
            system: CorpusSystem::Finite(coin_b()),
            expected: row("++-+++"),
            annotations: vec![exact("reach(0, a)", one(), "geometric exit from 1")],
            claims: vec![],
            certificate: None,
            mapping: None,
            binding: Some("overview column (b): the coin loop, second subfigure"),
        },
        "hindley_c" => CorpusEntry {
            name: "hindley_c",
            description: "0 and 1 exchange or exit to a and b respectively, all with probability 1/2",
            system: CorpusSystem::Finite(hindley_c()),
            expected: row("+----+"),
            annotations: vec![
                exact("reach(0, a)", ratio(2, 3), "x = 1/2 + x/4"),
                exact("reach(0, b)", ratio(1, 3), "complement of reach(0, a)"),
                exact("reach(1, b)", ratio(2, 3), "symmetric to reach(0, a)"),
            ],
            claims: vec![],
            certificate: None,
            mapping: None,
            binding: Some("overview column (c): the two-exit exchange, third subfigure"),
        },
        "ladder_d" => CorpusEntry {
            name: "ladder_d",
            description: "i -> i+1 with 1 - 4^-(i+1), i -> a with 4^-(i+1)",
            system: CorpusSystem::Generated(ladder_d()),
            expected: row("++----"),
            annotations: vec![approx(
                "divergence(0)",
                0.688_537_537_231_5,
                "infinite product of (1 - 4^-i), i >= 1: the q-Pochhammer symbol (1/4; 1/4)_inf",
            )],
            claims: vec![
                claim(Property::LocalConfluence, Verdict::Yes, "every peak i -> {i+1, a} joins at a in one step from i+1"),
                claim(Property::Confluence, Verdict::Yes, "a is the only normal form and every state reaches it"),
            ],
            certificate: None,
            mapping: None,
            binding: Some("overview column (d): the ladder, fourth subfigure"),
        },
        "ladder_dprime" => CorpusEntry {
            name: "ladder_dprime",
            description: "the ladder graph with every probability 1/2",
            system: CorpusSystem::Generated(ladder_dprime()),
            expected: row("++-+++"),
            annotations: vec![exact("reach(n, a)", one(), "1/2 + 1/4 + 1/8 + ... from every level")],
            claims: vec![
                claim(Property::LocalConfluence, Verdict::Yes, "every peak i -> {i+1, a} joins at a in one step from i+1"),
                claim(Property::Confluence, Verdict::Yes, "a is the only normal form and every state reaches it"),
            ],
            certificate: Some(
                LyapunovCertificate::new(ladder_dprime_valuation(), one())
                    .with_argument("4 - (1/2 * 4 + 1/2 * 1) = 3/2 >= 1 at every level n"),
            ),
            mapping: None,
            binding: Some("overview column (d'): the ladder graph with probabilities 1/2"),
        },
        "random_walk" => CorpusEntry {
            name: "random_walk",
            description: "walk on the naturals, up 1/3, down 2/3, 0 -> a with 2/3",
            system: CorpusSystem::Generated(random_walk_generated()),
            expected: row("++-+++"),
            annotations: vec![
                exact("reach(0, a)", one(), "downward drift; gambler's ruin with p = 1/3"),
                exact(
                    "ruin_bound(100)",
                    inverse_power(2, 100),
                    "chance of ever climbing 100 levels above the start is (1/2)^100",
                ),
            ],
            claims: vec![
                claim(Property::LocalConfluence, Verdict::Yes, "every state reaches a, the only normal form"),
                claim(Property::Confluence, Verdict::Yes, "every state reaches a, the only normal form"),
            ],
            certificate: Some(
                LyapunovCertificate::new(random_walk_valuation(), ratio(1, 3)).with_argument(
                    "(n+2) - (1/3 (n+3) + 2/3 (n+1)) = 1/3 for n >= 1, and 2 - (1/3 * 3 + 2/3 * 1) = 1/3 at 0",
                ),
            ),
            mapping: Some(random_walk_mapping(8)?),
            binding: None,
        },
        "herman3" => CorpusEntry {
            name: "herman3",
            description: "synchronous token ring of three processes",
            system: CorpusSystem::Finite(herman_ring(3)?),
            expected: row("++----"),
            annotations: vec![
                exact("rule([011], [011])", ratio(1, 4), "four equally likely outcomes; drawn as 1/2 in the source figure"),
                exact("reach([110], [000])", one(), "even parity drains to [000]"),
            ],
            claims: vec![],
            certificate: None,
            mapping: None,
            binding: None,
        },
        "herman3_pruned" => CorpusEntry {
            name: "herman3_pruned",
            description: "three-process ring with the rules of [100] removed",
            system: CorpusSystem::Finite(herman_pruned()),
            expected: row("++-+++"),
            annotations: vec![
                exact("reach([111], [100])", one(), "odd parity drains to [100]"),
                exact("reach([110], [000])", one(), "even parity drains to [000]"),
                exact("valuation([101])", ratio(13, 1), "the closed form gives 13, not 14"),
                exact("expectation(two-token)", ratio(19, 2), "sum of successor valuations from every two-token state"),
            ],
            claims: vec![],
            certificate: Some(
                LyapunovCertificate::new(herman_valuation(), half())
                    .with_argument("minimum margin 1/2, at [010]; margin 1 fails there"),
            ),
            mapping: Some(herman_mapping(herman_quotient())?),
            binding: None,
        },
        "herman_quotient" => CorpusEntry {
            name: "herman_quotient",
            description: "plain target odd -> [100], even -> [000]",
            system: CorpusSystem::Finite(herman_quotient()),
            expected: row("+++"),
            annotations: vec![],
            claims: vec![],
            certificate: None,
            mapping: None,
            binding: None,
        },
        "sec4_example" => {
            let p = half();
            CorpusEntry {
                name: "sec4_example",
                description: "0 loops with p or exits to a with 1 - p (default p = 1/2)",
                system: CorpusSystem::Finite(sec4_example_with(p.clone())?),
                expected: row("++-+++"),
                annotations: vec![exact("reach(0, a)", one(), "geometric exit")],
                claims: vec![],
                certificate: Some(sec4_certificate(&p)),
                mapping: Some(TransformMapping::new(
                    sec4_example_with(p)?,
                    Pars::plain(["0", "a"], [("0", "a")])?,
                    [("0", "0"), ("a", "a")]
                        .into_iter()
                        .map(|(x, y)| (StateId::from(x), StateId::from(y)))
                        .collect(),
                    Mode::C,
                )?),
                binding: None,
            }
        }
        other => return Err(Error::UnknownEntry(other.to_string())),
    };
    Ok(entry)
}

pub fn all() -> Vec<CorpusEntry> {
    NAMES.iter().map(|n| builtin(n).expect("built-in entry")).collect()
}

/// The certificate of the loop-or-exit system for a given loop probability.
pub fn sec4_certificate_with(p: &Prob) -> LyapunovCertificate {
    sec4_certificate(p)
}

// ---------------------------------------------------------------------------
// Row reproduction

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowCheck {
    pub property: Property,
    pub expected: Verdict,
    pub reproduced: Verdict,
    pub basis: String,
}

impl RowCheck {
    pub fn agrees(&self) -> bool {
        self.expected == self.reproduced
    }
}

/// Recomputes every expected verdict. Finite entries use the exact
/// checkers; generated entries use a window of the given depth, divergence
/// brackets, the shipped certificate, and (only where no window can
/// decide) the written claims.
pub fn reproduce_row(entry: &CorpusEntry, depth: usize) -> Result<Vec<RowCheck>> {
    let reproduced: Vec<(Verdict, String)> = match &entry.system {
        CorpusSystem::Finite(p) if p.is_probabilistic() => prob::table_row(p)?
            .into_iter()
            .map(|d| (d.verdict, "exact check".to_string()))
            .collect(),
        CorpusSystem::Finite(p) => [ars::check_local_confluence(p), ars::check_confluence(p), ars::check_termination(p)]
            .into_iter()
            .map(|d| (d.verdict, "exact check".to_string()))
            .collect(),
        CorpusSystem::Generated(g) => generated_row(entry, g, depth)?,
    };
    Ok(entry
        .expected
        .iter()
        .zip(reproduced)
        .map(|(&(property, expected), (reproduced, basis))| RowCheck {
            property,
            expected,
            reproduced,
            basis,
        })
        .collect())
}

fn window_or_claim(entry: &CorpusEntry, property: Property, w: WindowVerdict) -> (Verdict, String) {
    match w {
        WindowVerdict::Refuted { .. } => (Verdict::No, "counterexample inside the window".into()),
        WindowVerdict::Consistent { checked, open } => match entry.claim(property) {
            Some(c) => (
                c.verdict,
                format!("window consistent ({checked} checked, {open} open); argument: {}", c.argument),
            ),
            None => (Verdict::Unknown, format!("window consistent ({checked} checked, {open} open)")),
        },
    }
}

fn divergence_lower(g: &GeneratedPars, start: &StateId, depth: usize) -> Result<Prob> {
    let r = prob::divergence_bracket(g, start, depth, depth)?;
    Ok(match r.divergence {
        DivergenceValue::Bounds(iv) => iv.lo,
        DivergenceValue::Exact(d) => d,
    })
}

fn generated_row(entry: &CorpusEntry, g: &GeneratedPars, depth: usize) -> Result<Vec<(Verdict, String)>> {
    let window = explore(g, depth)?;
    let root = g.roots.first().ok_or_else(|| Error::Precondition("generated system has no root".into()))?;

    let lc = window_or_claim(entry, Property::LocalConfluence, ars::window_local_confluence(&window));
    let c = window_or_claim(entry, Property::Confluence, ars::window_confluence(&window));
    let term = match ars::window_termination(&window) {
        WindowVerdict::Refuted { .. } => (Verdict::No, "cycle inside the window".to_string()),
        WindowVerdict::Consistent { .. } if g.infinite_path(root, 0).is_some() => {
            (Verdict::No, "annotated infinite path from the root".to_string())
        }
        WindowVerdict::Consistent { .. } => (Verdict::Unknown, "no cycle inside the window".to_string()),
    };

    let root_lo = divergence_lower(g, root, depth)?;
    let ast = if root_lo > Prob::from_integer(0.into()) {
        (Verdict::No, format!("divergence of {root} at least {:.6}", crate::rational::to_f64(&root_lo)))
    } else {
        match &entry.certificate {
            Some(cert) => {
                let report = check_lyapunov(&window, cert)?;
                match report.verdict {
                    CertVerdict::Violated { state, .. } => (Verdict::Unknown, format!("certificate violated at {state}")),
                    CertVerdict::Certified => (Verdict::Yes, "certificate, full coverage".to_string()),
                    CertVerdict::Evidence { depth } => (
                        Verdict::Yes,
                        format!(
                            "certificate margins hold to depth {depth}; argument: {}",
                            cert.argument.as_deref().unwrap_or("none")
                        ),
                    ),
                }
            }
            None => (Verdict::Unknown, "no certificate and no positive divergence bound".to_string()),
        }
    };

    // a peak ending in a state that diverges with positive probability has
    // no normal form reached with probability one
    let core = &window.core;
    let r = core.require(root)?;
    let mut diverging_succ = None;
    for j in core.successor_ids(r) {
        let s = core.state(j);
        if divergence_lower(g, s, depth)? > Prob::from_integer(0.into()) {
            diverging_succ = Some(s.clone());
            break;
        }
    }
    let by_theorem = ast.0.is_yes() && c.0.is_yes();
    let aslc = match (&diverging_succ, by_theorem) {
        (Some(s), _) => (Verdict::No, format!("successor {s} of {root} diverges with positive probability")),
        (None, true) => (Verdict::Yes, "a.s. termination and confluence".to_string()),
        (None, false) => (Verdict::Unknown, "no diverging successor found".to_string()),
    };
    let asc = if ast.0 == Verdict::No {
        (Verdict::No, format!("the empty peak at {root} already diverges"))
    } else if by_theorem {
        (Verdict::Yes, "a.s. termination and confluence".to_string())
    } else {
        (Verdict::Unknown, "undecided".to_string())
    };
    Ok(vec![lc, c, term, aslc, asc, ast])
}

// ---------------------------------------------------------------------------
// Export

/// The system document of an entry (generated entries: the window of the
/// given depth) and its annotations sidecar.
pub fn export(entry: &CorpusEntry, depth: usize) -> Result<(String, String)> {
    let (system, window) = match &entry.system {
        CorpusSystem::Finite(p) => (p.clone(), None),
        CorpusSystem::Generated(g) => {
            let w = explore(g, depth)?;
            let frontier: Vec<String> = w.frontier_states().iter().map(|s| s.to_string()).collect();
            (w.core.clone(), Some((w.depth, frontier)))
        }
    };
    let expected: serde_json::Map<String, serde_json::Value> = entry
        .expected
        .iter()
        .map(|(p, v)| (p.name().to_string(), json!(v.symbol())))
        .collect();
    let mut sidecar = json!({
        "name": entry.name,
        "description": entry.description,
        "expected": expected,
        "annotations": entry.annotations,
        "claims": entry.claims,
    });
    if let Some(b) = entry.binding {
        sidecar["binding"] = json!(b);
    }
    if let Some((depth, frontier)) = window {
        sidecar["window"] = json!({ "depth": depth, "frontier": frontier });
    }
    if let Some(cert) = &entry.certificate {
        let valuation = match &cert.valuation {
            Valuation::Formula { name, .. } => json!({ "builtin": name }),
            Valuation::Table(t) => json!(t.iter().map(|(s, v)| (s.to_string(), format_prob(v))).collect::<BTreeMap<_, _>>()),
        };
        sidecar["certificate"] = json!({
            "valuation": valuation,
            "epsilon": format_prob(&cert.epsilon),
            "argument": cert.argument,
        });
    }
    if let Some(m) = &entry.mapping {
        sidecar["mapping"] = json!({
            "mode": m.mode,
            "G": m.g.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect::<BTreeMap<_, _>>(),
            "target": serde_json::from_str::<serde_json::Value>(&m.target.to_json()).map_err(|e| Error::Parse(e.to_string()))?,
        });
    }
    let sidecar = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    Ok((system.to_json(), sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::min_margin;
    use crate::prob::absorption_solve;
    use crate::transform::{check_conditions, Conclusion};

    fn id(s: &str) -> StateId {
        StateId::from(s)
    }

    fn succ(sys: &Pars, s: &str) -> BTreeMap<String, Prob> {
        let i = sys.index_of(&id(s)).unwrap();
        sys.weighted(i).map(|(j, p)| (sys.state(j).to_string(), p.clone())).collect()
    }

    fn dist(pairs: &[(&str, (i64, i64))]) -> BTreeMap<String, Prob> {
        pairs.iter().map(|(s, (n, d))| (s.to_string(), ratio(*n, *d))).collect()
    }

    #[test]
    fn unknown_entry() {
        assert!(matches!(builtin("nope"), Err(Error::UnknownEntry(n)) if n == "nope"));
    }

    #[test]
    fn every_name_builds() {
        assert_eq!(all().len(), NAMES.len());
    }

    #[test]
    fn hindley_shape() {
        let e = builtin("hindley_c").unwrap();
        let sys = e.finite().unwrap();
        assert_eq!(sys.len(), 4);
        assert_eq!(sys.rule_count(), 4);
        assert!(sys.rules().all(|r| r.p == Some(half())));
    }

    #[test]
    fn ring_of_three() {
        let r = herman_ring(3).unwrap();
        let q = (1, 4);
        assert_eq!(
            succ(&r, "[111]"),
            dist(&[("[001]", q), ("[010]", q), ("[100]", q), ("[111]", q)])
        );
        assert_eq!(
            succ(&r, "[110]"),
            dist(&[("[011]", q), ("[101]", q), ("[000]", q), ("[110]", q)])
        );
        assert_eq!(succ(&r, "[011]")["[011]"], ratio(1, 4));
        assert_eq!(succ(&r, "[001]"), dist(&[("[001]", (1, 2)), ("[010]", (1, 2))]));
        assert_eq!(succ(&r, "[100]"), dist(&[("[100]", (1, 2)), ("[001]", (1, 2))]));
        assert_eq!(r.normal_forms(), [id("[000]")].into_iter().collect());
    }

    #[test]
    fn ring_sizes() {
        let one_ring = herman_ring(1).unwrap();
        assert_eq!(succ(&one_ring, "[1]"), dist(&[("[1]", (1, 1))]));
        assert!(matches!(herman_ring(0), Err(Error::RingSize(0))));
        assert!(matches!(herman_ring(13), Err(Error::RingSize(13))));
        assert_eq!(herman_ring(5).unwrap().len(), 32);
    }

    #[test]
    fn pruned_ring_drains_by_parity() {
        let p = herman_pruned();
        assert_eq!(p.normal_forms(), [id("[000]"), id("[100]")].into_iter().collect());
        let solved = absorption_solve(&p).unwrap();
        assert_eq!(solved[&id("[111]")].reach, BTreeMap::from([(id("[100]"), one())]));
        assert_eq!(solved[&id("[110]")].reach, BTreeMap::from([(id("[000]"), one())]));
        assert_eq!(ars::convertibility_classes(&p).len(), 2);
    }

    #[test]
    fn herman_margins() {
        let cert = LyapunovCertificate::new(herman_valuation(), half());
        let r = check_lyapunov(&herman_pruned(), &cert).unwrap();
        assert!(r.is_certified());
        assert_eq!(min_margin(&r).unwrap(), (id("[010]"), half()));
        let v = herman_valuation();
        for s in ["[110]", "[101]", "[011]"] {
            assert_eq!(r.margins[&id(s)], v.value(&id(s)).unwrap() - ratio(19, 2));
        }
        assert_eq!(v.value(&id("[101]")).unwrap(), ratio(13, 1));
        let strict = LyapunovCertificate::new(herman_valuation(), one());
        let r = check_lyapunov(&herman_pruned(), &strict).unwrap();
        assert_eq!(
            r.verdict,
            CertVerdict::Violated {
                state: id("[010]"),
                margin: half()
            }
        );
    }

    #[test]
    fn walk_truncation() {
        let w = random_walk(2).unwrap();
        let rules: Vec<(String, String, Prob)> =
            w.rules().map(|r| (r.from.to_string(), r.to.to_string(), r.p.unwrap())).collect();
        let mut expected = vec![
            ("0".to_string(), "a".to_string(), ratio(2, 3)),
            ("0".into(), "1".into(), ratio(1, 3)),
            ("1".into(), "0".into(), ratio(2, 3)),
            ("1".into(), "2".into(), ratio(1, 3)),
            ("2".into(), "1".into(), one()),
        ];
        let mut got = rules;
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        assert!(random_walk(0).is_err());
    }

    #[test]
    fn walk_window_frontier() {
        let w = explore(&random_walk_generated(), 5).unwrap();
        assert_eq!(w.frontier, [id("5")].into_iter().collect());
    }

    #[test]
    fn certificates_and_mappings_hold() {
        for e in all() {
            if let Some(cert) = &e.certificate {
                let report = match &e.system {
                    CorpusSystem::Finite(p) => check_lyapunov(p, cert).unwrap(),
                    CorpusSystem::Generated(g) => check_lyapunov(&explore(g, 50).unwrap(), cert).unwrap(),
                };
                assert!(report.holds(), "{}: {:?}", e.name, report.verdict);
            }
            if let Some(m) = &e.mapping {
                let r = check_conditions(m);
                assert!(r.all_hold(), "{}: {:?}", e.name, r.failed);
                assert_ne!(r.conclusion, Conclusion::Inconclusive, "{}", e.name);
            }
        }
    }

    #[test]
    fn finite_rows_reproduce() {
        for e in all().iter().filter(|e| e.finite().is_some()) {
            for c in reproduce_row(e, 0).unwrap() {
                assert!(c.agrees(), "{} {:?}: {:?}", e.name, c.property, c);
            }
        }
    }

    #[test]
    fn sec4_parameter_range() {
        assert!(sec4_example_with(ratio(0, 1)).is_err());
        assert!(sec4_example_with(one()).is_err());
        assert!(sec4_example_with(ratio(3, 4)).is_ok());
    }

    #[test]
    fn export_round_trip() {
        let e = builtin("coin_b").unwrap();
        let (sys, sidecar) = export(&e, 0).unwrap();
        let back = crate::system::load_system(&sys).unwrap();
        assert_eq!(&back, e.finite().unwrap());
        let v: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(v["expected"]["as_termination"], "+");
        let (_, side) = export(&builtin("random_walk").unwrap(), 4).unwrap();
        let v: serde_json::Value = serde_json::from_str(&side).unwrap();
        assert_eq!(v["window"]["frontier"], json!(["4"]));
        assert_eq!(v["certificate"]["valuation"]["builtin"], "random_walk");
    }

    #[test]
    fn generated_rows_reproduce() {
        for name in ["ladder_d", "ladder_dprime", "random_walk"] {
            let e = builtin(name).unwrap();
            for c in reproduce_row(&e, 40).unwrap() {
                assert!(c.agrees(), "{name} {:?}: {}", c.property, c.basis);
            }
        }
    }

    #[test]
    fn herman_transformation() {
        let m = herman_mapping(herman_quotient()).unwrap();
        let r = check_conditions(&m);
        assert!(r.all_hold(), "{:?}", r.failed);
        let evidence = crate::transform::as_termination_from_certificate(
            &check_lyapunov(&m.source, builtin("herman3_pruned").unwrap().certificate.as_ref().unwrap()).unwrap(),
        );
        assert_eq!(crate::transform::conclude(&r, &evidence), Conclusion::SourceAsConvergent);

        // a second fork out of odd makes the target non-confluent; the
        // surjectivity and normal-form conditions then fail for this source
        let forked = Pars::plain(
            ["odd", "even", "[100]", "[000]", "x"],
            [("odd", "[100]"), ("even", "[000]"), ("odd", "x")],
        )
        .unwrap();
        let r = check_conditions(&herman_mapping(forked).unwrap());
        assert!(!r.all_hold());
        assert_eq!(r.conclusion, Conclusion::Inconclusive);
    }

    #[test]
    fn non_confluent_target_refutes_source() {
        // exchange system onto x -> a, x -> b
        let source = hindley_c();
        let target = Pars::plain(["x", "a", "b"], [("x", "a"), ("x", "b")]).unwrap();
        let g = [("0", "x"), ("1", "x"), ("a", "a"), ("b", "b")]
            .into_iter()
            .map(|(a, b)| (id(a), id(b)))
            .collect();
        let m = TransformMapping::new(source, target, g, Mode::Cprime).unwrap();
        let r = check_conditions(&m);
        assert!(r.all_hold(), "{:?}", r.failed);
        assert_eq!(r.conclusion, Conclusion::SourceNotConfluent);
        let evidence = prob::check_as_termination(&m.source).unwrap();
        assert_eq!(crate::transform::conclude(&r, &evidence), Conclusion::SourceNotAsConvergent);
        assert!(!prob::check_as_convergence(&m.source).unwrap().is_yes());
    }

    #[test]
    fn walk_mapping_on_truncations() {
        for n in [1, 2, 5, 20] {
            let m = random_walk_mapping(n).unwrap();
            let r = check_conditions(&m);
            assert!(r.all_hold());
            let cert = builtin("random_walk").unwrap().certificate.unwrap();
            let evidence = crate::transform::as_termination_from_certificate(&check_lyapunov(&m.source, &cert).unwrap());
            assert_eq!(crate::transform::conclude(&r, &evidence), Conclusion::SourceAsConvergent);
        }
    }
}
