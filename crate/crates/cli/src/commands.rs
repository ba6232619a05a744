use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use parskit::ars::{self, Decision, Property};
use parskit::certify::{check_lyapunov, min_margin, LyapunovCertificate, MarginReport};
use parskit::corpus::{self, CorpusSystem};
use parskit::montecarlo::monte_carlo_with;
use parskit::par::Execution;
use parskit::prob::{self, DivergenceValue, ReachReport};
use parskit::system::{validate, SystemDocument};
use parskit::transform::{self, check_conditions, Mode, TransformMapping};
use parskit::{explore, format_prob, Analyzable, Error, Pars, StateId, Verdict};
use serde_json::{json, Value};

use crate::input::{self, Subject};
use crate::report::{digest, Outcome};

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn decision_line(d: &Decision) -> String {
    let mut line = format!("{:<22} {}", d.property.name(), d.verdict.symbol());
    if let Some(w) = &d.witness {
        let _ = write!(line, "  witness {}", serde_json::to_string(w).expect("witness serializes"));
    }
    for n in &d.notes {
        let _ = write!(line, "  [{n}]");
    }
    line
}

/// Exact text for short rationals, a decimal otherwise; JSON reports stay exact.
fn short_prob(p: &parskit::Prob) -> String {
    let exact = format_prob(p);
    if exact.len() <= 40 {
        exact
    } else {
        format!("{:.12}", parskit::rational::to_f64(p))
    }
}

fn reach_text(r: &ReachReport) -> String {
    let mut out = format!("from {}:", r.start);
    for (t, p) in &r.reach {
        let _ = write!(out, " {t}={}", short_prob(p));
    }
    match &r.divergence {
        DivergenceValue::Exact(d) => {
            let _ = write!(out, " divergence={}", format_prob(d));
        }
        DivergenceValue::Bounds(iv) => {
            let _ = write!(
                out,
                " divergence in [{:.12}, {:.12}] (width {:.3e})",
                parskit::rational::to_f64(&iv.lo),
                parskit::rational::to_f64(&iv.hi),
                parskit::rational::to_f64(&iv.width())
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------

pub fn validate_cmd(path: &str, depth: usize) -> Result<Outcome> {
    if input::corpus_name(path).is_some() {
        let inp = input::load(path)?;
        let (ok, text) = match &inp.subject {
            Subject::Finite(_) => (true, "ok".to_string()),
            Subject::Generated(g) => {
                let w = explore(g, depth)?;
                (true, format!("ok (generated; {} states validated to depth {depth})", w.core.len()))
            }
        };
        return Ok(Outcome::ok(digest(&[&inp.bytes]), json!({ "ok": ok, "issues": [] }), text));
    }
    let text = input::read(path)?;
    let doc = SystemDocument::from_json(&text)?;
    let report = validate(&doc);
    let mut out = if report.ok { "ok".to_string() } else { "invalid".to_string() };
    for issue in &report.issues {
        let _ = write!(out, "\n{:?} {:?} at {}: {}", issue.severity, issue.code, issue.location, issue.message);
    }
    Ok(Outcome {
        digest: digest(&[text.as_bytes()]),
        results: to_value(&report),
        text: out,
        exit_code: if report.ok { 0 } else { 2 },
    })
}

fn parse_properties(list: Option<&str>, probabilistic: bool) -> Result<Vec<Property>> {
    match list {
        Some(l) => l
            .split(',')
            .map(|s| Property::parse(s.trim()).ok_or_else(|| anyhow!("unknown property {s:?}")))
            .collect(),
        None if probabilistic => Ok(vec![
            Property::LocalConfluence,
            Property::Confluence,
            Property::Termination,
            Property::AsLocalConvergence,
            Property::AsConvergence,
            Property::AsTermination,
        ]),
        None => Ok(vec![
            Property::LocalConfluence,
            Property::Confluence,
            Property::Termination,
            Property::Normalization,
            Property::UniqueNormalForms,
        ]),
    }
}

fn decide(sys: &Pars, p: Property) -> Result<Decision> {
    Ok(match p {
        Property::Termination => ars::check_termination(sys),
        Property::Normalization => ars::check_normalizing(sys),
        Property::LocalConfluence => ars::check_local_confluence(sys),
        Property::Confluence => ars::check_confluence(sys),
        Property::UniqueNormalForms => ars::check_unique_nf(sys),
        Property::AsTermination => prob::check_as_termination(sys)?,
        Property::AsLocalConvergence => prob::check_as_local_convergence(sys)?,
        Property::AsConvergence => prob::check_as_convergence(sys)?,
        Property::ProbNormalization => prob::check_prob_normalizing(sys)?,
    })
}

pub fn analyze(path: &str, properties: Option<&str>, depth: Option<usize>) -> Result<Outcome> {
    let inp = input::load(path)?;
    let dg = digest(&[&inp.bytes]);
    match (&inp.subject, depth) {
        (Subject::Finite(sys), _) => {
            let props = parse_properties(properties, sys.is_probabilistic())?;
            let decisions = props.iter().map(|&p| decide(sys, p)).collect::<Result<Vec<_>>>()?;
            let mut text: Vec<String> = decisions.iter().map(decision_line).collect();
            let mut results = json!({ "decisions": to_value(&decisions) });
            if let Some(e) = &inp.entry {
                let agrees = decisions
                    .iter()
                    .all(|d| e.expected_verdict(d.property).is_none_or(|v| v == d.verdict));
                results["expected_agrees"] = json!(agrees);
                text.push(format!("matches expected row: {}", if agrees { "yes" } else { "no" }));
            }
            Ok(Outcome::ok(dg, results, text.join("\n")))
        }
        (Subject::Generated(g), None) => {
            let w = explore(g, 0)?;
            Err(Error::FrontierPresent(w.frontier_states()).into())
        }
        (Subject::Generated(_), Some(d)) => {
            let e = inp.entry.as_ref().expect("generated inputs come from the corpus");
            if properties.is_some() {
                bail!("--properties is not supported for generated systems; the overview row is reproduced");
            }
            let checks = corpus::reproduce_row(e, d)?;
            let text = checks
                .iter()
                .map(|c| {
                    format!(
                        "{:<22} {}  (expected {}; {})",
                        c.property.name(),
                        c.reproduced.symbol(),
                        c.expected.symbol(),
                        c.basis
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            let agrees = checks.iter().all(|c| c.agrees());
            Ok(Outcome::ok(
                dg,
                json!({ "window_depth": d, "checks": to_value(&checks), "expected_agrees": agrees }),
                text,
            ))
        }
    }
}

pub struct ProbArgs<'a> {
    pub path: &'a str,
    pub from: &'a str,
    pub to: Option<&'a str>,
    pub iterate: Option<usize>,
    pub depth: Option<usize>,
}

pub fn prob_cmd(a: ProbArgs<'_>) -> Result<Outcome> {
    let inp = input::load(a.path)?;
    let dg = digest(&[&inp.bytes]);
    let from = StateId::from(a.from);
    match &inp.subject {
        Subject::Finite(sys) => {
            if let Some(to) = a.to {
                let p = prob::reach_probability(sys, &from, &StateId::from(to))?;
                let text = format!("P({} ->* {to}) = {}", a.from, format_prob(&p));
                return Ok(Outcome::ok(
                    dg,
                    json!({ "start": a.from, "target": to, "probability": format_prob(&p) }),
                    text,
                ));
            }
            if let Some(n) = a.iterate {
                return trace_outcome(dg, sys, &from, n);
            }
            let solved = prob::absorption_solve(sys)?;
            sys.require(&from)?;
            let r = &solved[&from];
            Ok(Outcome::ok(dg, to_value(r), reach_text(r)))
        }
        Subject::Generated(g) => {
            let depth = a.depth.ok_or_else(|| {
                let w = explore(g, 0).map(|w| w.frontier_states()).unwrap_or_default();
                Error::FrontierPresent(w)
            })?;
            if a.to.is_some() {
                bail!("--to needs a finite system; generated systems report brackets");
            }
            let n = a.iterate.unwrap_or(depth);
            let r = prob::divergence_bracket(g, &from, depth, n)?;
            let mut results = to_value(&r);
            results["window_depth"] = json!(depth);
            results["steps"] = json!(n);
            Ok(Outcome::ok(dg, results, reach_text(&r)))
        }
    }
}

fn trace_outcome<A: Analyzable>(dg: String, sys: &A, from: &StateId, n: usize) -> Result<Outcome> {
    let trace = prob::pn_trace(sys, from, n)?;
    let text = trace
        .iter()
        .map(|s| {
            format!(
                "n={:<4} settled={} alive={}",
                s.n,
                short_prob(&s.settled_total()),
                short_prob(&s.alive_total())
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::ok(dg, json!({ "trace": to_value(&trace) }), text))
}

pub struct SimulateArgs<'a> {
    pub path: &'a str,
    pub from: &'a str,
    pub samples: u64,
    pub steps: u64,
    pub seed: u64,
    pub depth: Option<usize>,
    pub exec: Execution,
}

pub fn simulate(a: SimulateArgs<'_>) -> Result<Outcome> {
    let inp = input::load(a.path)?;
    let dg = digest(&[&inp.bytes]);
    let from = StateId::from(a.from);
    let report = match &inp.subject {
        Subject::Finite(sys) => monte_carlo_with(sys, &from, a.steps, a.samples, a.seed, a.exec)?,
        Subject::Generated(g) => {
            // deep enough that no run of `steps` reductions meets the frontier
            let depth = a.depth.unwrap_or(a.steps as usize + 1);
            let w = explore(g, depth)?;
            monte_carlo_with(&w, &from, a.steps, a.samples, a.seed, a.exec)?
        }
    };
    let mut text = format!("seed {} samples {} max_steps {}", report.seed, report.samples, report.max_steps);
    for (t, c) in &report.absorbed {
        let _ = write!(text, "\n{t}: {c} ({:.6})", report.fraction(t));
    }
    let _ = write!(text, "\ncensored: {} ({:.6})", report.censored, report.censored_fraction());
    if report.frontier > 0 {
        let _ = write!(text, "\nfrontier: {}", report.frontier);
    }
    let mut results = to_value(&report);
    results["censored_fraction"] = json!(report.censored_fraction());
    Ok(Outcome::ok(dg, results, text))
}

fn load_certificate(spec: &str) -> Result<(LyapunovCertificate, Vec<u8>)> {
    if let Some(name) = input::corpus_name(spec) {
        let e = input::entry(name)?;
        let cert = e
            .certificate
            .ok_or_else(|| anyhow!("corpus entry {name} ships no certificate"))?;
        return Ok((cert, spec.as_bytes().to_vec()));
    }
    let text = input::read(spec)?;
    Ok((LyapunovCertificate::from_json(&text)?, text.into_bytes()))
}

fn margin_text(r: &MarginReport, cert: &LyapunovCertificate) -> String {
    let mut text = format!(
        "verdict: {}\nstates checked: {}\nepsilon: {}",
        serde_json::to_string(&r.verdict).expect("verdict serializes"),
        r.states_checked,
        format_prob(&r.epsilon)
    );
    if let Ok((s, m)) = min_margin(r) {
        let _ = write!(text, "\nmin margin: {} at {s}", format_prob(&m));
    }
    let _ = write!(text, "\ncoverage: {}", serde_json::to_string(&r.coverage).expect("coverage serializes"));
    if let Some(arg) = &cert.argument {
        let _ = write!(text, "\nargument (not verified): {arg}");
    }
    text
}

pub fn certify(path: &str, certificate: &str, depth: Option<usize>) -> Result<Outcome> {
    let inp = input::load(path)?;
    let (cert, cert_bytes) = load_certificate(certificate)?;
    let dg = digest(&[&inp.bytes, &cert_bytes]);
    let report = match &inp.subject {
        Subject::Finite(sys) => check_lyapunov(sys, &cert)?,
        Subject::Generated(g) => {
            let depth = depth.ok_or_else(|| Error::FrontierPresent(Vec::new()))?;
            check_lyapunov(&explore(g, depth)?, &cert)?
        }
    };
    let mut results = to_value(&report);
    if let Ok((s, m)) = min_margin(&report) {
        results["min_margin"] = json!({ "state": s, "margin": format_prob(&m) });
    }
    if let Some(arg) = &cert.argument {
        results["argument"] = json!(arg);
    }
    let text = margin_text(&report, &cert);
    Ok(Outcome::ok(dg, results, text))
}

pub struct TransformArgs<'a> {
    pub source: Option<&'a str>,
    pub target: Option<&'a str>,
    pub map: &'a str,
    pub mode: Option<Mode>,
    pub as_term_cert: Option<&'a str>,
}

pub fn transform_cmd(a: TransformArgs<'_>) -> Result<Outcome> {
    let mut digests: Vec<Vec<u8>> = Vec::new();
    let mapping = if let Some(name) = input::corpus_name(a.map) {
        if a.source.is_some() || a.target.is_some() {
            bail!("a corpus mapping carries its own source and target");
        }
        let e = input::entry(name)?;
        let mut m = e
            .mapping
            .ok_or_else(|| anyhow!("corpus entry {name} ships no mapping"))?;
        if let Some(mode) = a.mode {
            m.mode = mode;
        }
        digests.push(a.map.as_bytes().to_vec());
        m
    } else {
        let text = input::read(a.map)?;
        let doc = transform::MappingDocument::from_json(&text)?;
        digests.push(text.into_bytes());
        let mut side = |arg: Option<&str>, embedded: &Option<SystemDocument>, what: &str| -> Result<Pars> {
            match (arg, embedded) {
                (Some(p), _) => {
                    let (sys, bytes) = input::load_finite(p)?;
                    digests.push(bytes);
                    Ok(sys)
                }
                (None, Some(d)) => Ok(Pars::from_document(d)?),
                (None, None) => bail!("no {what} system given on the command line or in the mapping"),
            }
        };
        let source = side(a.source, &doc.source, "source")?;
        let target = side(a.target, &doc.target, "target")?;
        let mode = a
            .mode
            .or(doc.mode)
            .ok_or_else(|| anyhow!("no mode given; pass --mode C or --mode Cprime"))?;
        TransformMapping::new(source, target, doc.mapping(), mode)?
    };

    let report = check_conditions(&mapping);
    let (evidence, evidence_source) = match a.as_term_cert {
        Some(spec) => {
            let (cert, bytes) = load_certificate(spec)?;
            digests.push(bytes);
            let margins = check_lyapunov(&mapping.source, &cert)?;
            (transform::as_termination_from_certificate(&margins), "certificate")
        }
        None if mapping.source.is_probabilistic() => (prob::check_as_termination(&mapping.source)?, "exact check"),
        None => (
            Decision {
                property: Property::AsTermination,
                verdict: Verdict::Unknown,
                witness: None,
                notes: vec!["plain source system carries no probabilities".into()],
            },
            "none",
        ),
    };
    let conclusion = transform::conclude(&report, &evidence);

    let mut text: Vec<String> = report
        .conditions
        .iter()
        .map(|c| {
            let mut line = format!("{:<4} {}", c.name, c.verdict.symbol());
            if let Some(w) = &c.witness {
                let _ = write!(line, "  witness {}", serde_json::to_string(w).expect("witness serializes"));
            }
            line
        })
        .collect();
    text.push(format!("target confluent: {}", report.target_confluence.verdict.symbol()));
    text.push(format!(
        "a.s. termination evidence ({evidence_source}): {}",
        evidence.verdict.symbol()
    ));
    if !report.failed.is_empty() {
        text.push(format!("failed: {}", report.failed.join(", ")));
    }
    text.push(format!("conclusion: {}", to_value(&conclusion).as_str().unwrap_or("?")));

    let refs: Vec<&[u8]> = digests.iter().map(|d| d.as_slice()).collect();
    Ok(Outcome::ok(
        digest(&refs),
        json!({
            "report": to_value(&report),
            "as_termination_evidence": to_value(&evidence),
            "conclusion": to_value(&conclusion),
        }),
        text.join("\n"),
    ))
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT rendering with nodes and edges in state order.
pub fn to_dot(name: &str, sys: &Pars, frontier: &[StateId]) -> String {
    let mut out = format!("digraph {} {{\n", dot_quote(name));
    for s in sys.states() {
        if frontier.contains(s) {
            let _ = writeln!(out, "  {} [style=dashed];", dot_quote(s.as_str()));
        } else if sys.is_normal_form_idx(sys.index_of(s).expect("own state")) {
            let _ = writeln!(out, "  {} [shape=doublecircle];", dot_quote(s.as_str()));
        } else {
            let _ = writeln!(out, "  {};", dot_quote(s.as_str()));
        }
    }
    for r in sys.rules() {
        match &r.p {
            Some(p) => {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label={}];",
                    dot_quote(r.from.as_str()),
                    dot_quote(r.to.as_str()),
                    dot_quote(&format_prob(p))
                );
            }
            None => {
                let _ = writeln!(out, "  {} -> {};", dot_quote(r.from.as_str()), dot_quote(r.to.as_str()));
            }
        }
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(path: &str, depth: Option<usize>) -> Result<Outcome> {
    let inp = input::load(path)?;
    let name = inp.entry.as_ref().map(|e| e.name).unwrap_or("system");
    let (sys, frontier) = match &inp.subject {
        Subject::Finite(p) => (p.clone(), Vec::new()),
        Subject::Generated(g) => {
            let w = explore(g, depth.unwrap_or(5))?;
            let f = w.frontier_states();
            (w.core, f)
        }
    };
    let dot = to_dot(name, &sys, &frontier);
    Ok(Outcome::ok(digest(&[&inp.bytes]), json!({ "dot": dot }), dot.trim_end().to_string()))
}

pub fn corpus_list() -> Result<Outcome> {
    let entries: Vec<Value> = corpus::all()
        .iter()
        .map(|e| {
            json!({
                "name": e.name,
                "description": e.description,
                "kind": match e.system { CorpusSystem::Finite(_) => "finite", CorpusSystem::Generated(_) => "generated" },
                "expected": e.expected.iter().map(|(p, v)| (p.name().to_string(), json!(v.symbol()))).collect::<serde_json::Map<_, _>>(),
            })
        })
        .collect();
    let text = corpus::all()
        .iter()
        .map(|e| format!("{:<16} {}", e.name, e.description))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::ok(digest(&[b"corpus"]), json!({ "entries": entries }), text))
}

pub fn corpus_export(name: &str, out: Option<&Path>, depth: usize) -> Result<Outcome> {
    let e = input::entry(name)?;
    let (system, sidecar) = corpus::export(&e, depth)?;
    let text = match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            let sys_path = dir.join(format!("{name}.json"));
            let side_path = dir.join(format!("{name}.annotations.json"));
            fs::write(&sys_path, &system).with_context(|| format!("cannot write {}", sys_path.display()))?;
            fs::write(&side_path, &sidecar).with_context(|| format!("cannot write {}", side_path.display()))?;
            format!("wrote {}\nwrote {}", sys_path.display(), side_path.display())
        }
        None => format!("{}{}", system, sidecar.trim_end()),
    };
    let sidecar_value: Value = serde_json::from_str(&sidecar)?;
    let system_value: Value = serde_json::from_str(&system)?;
    Ok(Outcome::ok(
        digest(&[system.as_bytes()]),
        json!({ "system": system_value, "annotations": sidecar_value }),
        text,
    ))
}
