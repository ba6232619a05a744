//! Confluence by transformation.
//!
//! Given a source system `R`, a target ARS `R'` and a total state mapping
//! `G`, the conditions C1–C5 make `R` confluent whenever they hold; the
//! stronger C1'–C5' make `R` confluent exactly when `R'` is. Combined with
//! almost-sure termination of the source, confluence is the same as
//! almost-sure convergence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ars::{self, class_labels, Decision, Verdict, Witness};
use crate::certify::{CertVerdict, MarginReport};
use crate::error::{Error, Result};
use crate::system::{Analyzable, ExploredSystem, Pars, StateId, SystemDocument};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    C,
    Cprime,
}

#[derive(Clone, Debug)]
pub struct TransformMapping {
    pub source: Pars,
    pub target: Pars,
    pub g: BTreeMap<StateId, StateId>,
    pub mode: Mode,
}

impl TransformMapping {
    pub fn new(source: Pars, target: Pars, g: BTreeMap<StateId, StateId>, mode: Mode) -> Result<Self> {
        for s in source.states() {
            let image = g.get(s).ok_or_else(|| Error::PartialMapping(s.clone()))?;
            if !target.contains(image) {
                return Err(Error::UnknownImage {
                    from: s.clone(),
                    image: image.clone(),
                });
            }
        }
        let g = g.into_iter().filter(|(s, _)| source.contains(s)).collect();
        Ok(TransformMapping { source, target, g, mode })
    }

    /// Windows with an open frontier are refused: the conditions quantify
    /// over all states and reductions.
    pub fn from_window(
        window: &ExploredSystem,
        target: Pars,
        g: BTreeMap<StateId, StateId>,
        mode: Mode,
    ) -> Result<Self> {
        if window.has_frontier() {
            return Err(Error::FrontierPresent(window.frontier_states()));
        }
        Self::new(window.core.clone(), target, g, mode)
    }

    fn image(&self, s: &StateId) -> usize {
        self.target.index_of(&self.g[s]).expect("validated image")
    }
}

/// `{"mode": "C" | "Cprime", "source": system, "target": system, "G": {state: state}}`.
/// The systems may be omitted when supplied separately.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingDocument {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub source: Option<SystemDocument>,
    #[serde(default)]
    pub target: Option<SystemDocument>,
    #[serde(rename = "G")]
    pub g: BTreeMap<String, String>,
}

impl MappingDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn mapping(&self) -> BTreeMap<StateId, StateId> {
        self.g
            .iter()
            .map(|(a, b)| (StateId::new(a.as_str()), StateId::new(b.as_str())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionResult {
    pub name: &'static str,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    SourceConfluent,
    SourceNotConfluent,
    SourceAsConvergent,
    SourceNotAsConvergent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionReport {
    pub mode: Mode,
    pub conditions: Vec<ConditionResult>,
    pub target_confluence: Decision,
    pub conclusion: Conclusion,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<&'static str>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.verdict.is_yes())
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn result(name: &'static str, witness: Option<Witness>) -> ConditionResult {
    ConditionResult {
        name,
        verdict: Verdict::from_bool(witness.is_none()),
        witness,
    }
}

fn from_decision(name: &'static str, d: &Decision) -> ConditionResult {
    ConditionResult {
        name,
        verdict: d.verdict,
        witness: d.witness.clone(),
    }
}

/// Rules `s -> t` of the source whose images are not convertible in the target.
fn c3_forward(m: &TransformMapping, target_class: &[usize]) -> Option<Witness> {
    m.source.rules().find_map(|r| {
        let (a, b) = (m.image(&r.from), m.image(&r.to));
        (target_class[a] != target_class[b]).then_some(Witness::Rule { from: r.from, to: r.to })
    })
}

/// States whose images are convertible in the target but which are not
/// convertible in the source: the pullback of the target classes must
/// refine into source classes.
fn c3_backward(m: &TransformMapping, target_class: &[usize]) -> Option<Witness> {
    let source_class = class_labels(&m.source);
    let mut first_in: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..m.source.len() {
        let k = target_class[m.image(m.source.state(i))];
        match first_in.get(&k) {
            None => {
                first_in.insert(k, i);
            }
            Some(&j) if source_class[j] != source_class[i] => {
                return Some(Witness::Pair {
                    left: m.source.state(j).clone(),
                    right: m.source.state(i).clone(),
                });
            }
            Some(_) => {}
        }
    }
    None
}

fn c4_forward(m: &TransformMapping) -> Option<Witness> {
    m.source
        .normal_forms()
        .into_iter()
        .find(|t| !m.target.is_normal_form_idx(m.image(t)))
        .map(|state| Witness::State { state })
}

fn c4_backward(m: &TransformMapping) -> Option<Witness> {
    m.source
        .states()
        .iter()
        .enumerate()
        .find(|(i, s)| m.target.is_normal_form_idx(m.image(s)) && !m.source.is_normal_form_idx(*i))
        .map(|(_, s)| Witness::State { state: s.clone() })
}

fn c5(m: &TransformMapping) -> Option<Witness> {
    let mut seen: BTreeMap<&StateId, &StateId> = BTreeMap::new();
    let nfs = m.source.normal_forms();
    for t in &nfs {
        let image = &m.g[t];
        if let Some(prev) = seen.insert(image, t) {
            return Some(Witness::Collision {
                left: prev.clone(),
                right: t.clone(),
                image: image.clone(),
            });
        }
    }
    None
}

fn surjectivity(m: &TransformMapping) -> Option<Witness> {
    let hit: BTreeSet<&StateId> = m.g.values().collect();
    m.target
        .states()
        .iter()
        .find(|s| !hit.contains(s))
        .map(|s| Witness::State { state: s.clone() })
}

fn both(a: Option<Witness>, b: impl FnOnce() -> Option<Witness>) -> Option<Witness> {
    a.or_else(b)
}

pub fn check_conditions(mapping: &TransformMapping) -> ConditionReport {
    let m = mapping;
    let target_class = class_labels(&m.target);
    let target_confluence = ars::check_confluence(&m.target);
    let source_norm = ars::check_normalizing(&m.source);

    let conditions = match m.mode {
        Mode::C => vec![
            from_decision("C1", &target_confluence),
            from_decision("C2", &source_norm),
            result("C3", c3_forward(m, &target_class)),
            result("C4", c4_forward(m)),
            result("C5", c5(m)),
        ],
        Mode::Cprime => {
            let target_norm = ars::check_normalizing(&m.target);
            let c2 = if source_norm.is_yes() { target_norm } else { source_norm };
            vec![
                result("C1'", surjectivity(m)),
                from_decision("C2'", &c2),
                result("C3'", both(c3_forward(m, &target_class), || c3_backward(m, &target_class))),
                result("C4'", both(c4_forward(m), || c4_backward(m))),
                result("C5'", c5(m)),
            ]
        }
    };
    let failed: Vec<&'static str> = conditions
        .iter()
        .filter(|c| !c.verdict.is_yes())
        .map(|c| c.name)
        .collect();
    let conclusion = match (m.mode, failed.is_empty(), target_confluence.verdict) {
        (_, false, _) => Conclusion::Inconclusive,
        (Mode::C, true, _) => Conclusion::SourceConfluent,
        (Mode::Cprime, true, Verdict::Yes) => Conclusion::SourceConfluent,
        (Mode::Cprime, true, Verdict::No) => Conclusion::SourceNotConfluent,
        (Mode::Cprime, true, Verdict::Unknown) => Conclusion::Inconclusive,
    };
    ConditionReport {
        mode: m.mode,
        conditions,
        target_confluence,
        conclusion,
        failed,
    }
}

/// Upgrades a structural conclusion with almost-sure termination evidence
/// for the source.
pub fn conclude(report: &ConditionReport, as_term_evidence: &Decision) -> Conclusion {
    if !as_term_evidence.is_yes() {
        return Conclusion::Inconclusive;
    }
    match (report.mode, report.conclusion) {
        (_, Conclusion::SourceConfluent) => Conclusion::SourceAsConvergent,
        (Mode::Cprime, Conclusion::SourceNotConfluent) => Conclusion::SourceNotAsConvergent,
        _ => Conclusion::Inconclusive,
    }
}

/// Reads a margin report as almost-sure termination evidence: only a
/// full-coverage certificate counts.
pub fn as_termination_from_certificate(report: &MarginReport) -> Decision {
    use crate::ars::Property;
    match &report.verdict {
        CertVerdict::Certified => Decision::yes(Property::AsTermination).with_note("Lyapunov certificate, full coverage"),
        CertVerdict::Evidence { depth } => Decision {
            property: Property::AsTermination,
            verdict: Verdict::Unknown,
            witness: None,
            notes: vec![format!("certificate holds on an exploration window of depth {depth} only")],
        },
        CertVerdict::Violated { state, .. } => Decision {
            property: Property::AsTermination,
            verdict: Verdict::Unknown,
            witness: Some(Witness::State { state: state.clone() }),
            notes: vec!["certificate margin violated; no conclusion".into()],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn g(pairs: &[(&str, &str)]) -> BTreeMap<StateId, StateId> {
        pairs.iter().map(|(a, b)| (StateId::from(*a), StateId::from(*b))).collect()
    }

    fn loop_exit() -> Pars {
        Pars::probabilistic(["0", "a"], [("0", "0", ratio(1, 2)), ("0", "a", ratio(1, 2))]).unwrap()
    }

    #[test]
    fn loop_exit_satisfies_c_conditions() {
        let target = Pars::plain(["0", "a"], [("0", "a")]).unwrap();
        let m = TransformMapping::new(loop_exit(), target, g(&[("0", "0"), ("a", "a")]), Mode::C).unwrap();
        let r = check_conditions(&m);
        assert!(r.all_hold(), "{r:?}");
        assert_eq!(r.conclusion, Conclusion::SourceConfluent);
    }

    #[test]
    fn partial_mapping_is_rejected() {
        let target = Pars::plain(["0", "a"], [("0", "a")]).unwrap();
        assert!(matches!(
            TransformMapping::new(loop_exit(), target.clone(), g(&[("0", "0")]), Mode::C),
            Err(Error::PartialMapping(s)) if s.as_str() == "a"
        ));
        assert!(matches!(
            TransformMapping::new(loop_exit(), target, g(&[("0", "0"), ("a", "zz")]), Mode::C),
            Err(Error::UnknownImage { .. })
        ));
    }

    #[test]
    fn collision_breaks_c5() {
        let source = Pars::plain(["s", "a", "b"], [("s", "a"), ("s", "b")]).unwrap();
        let target = Pars::plain(["x", "t"], [("x", "t")]).unwrap();
        let m = TransformMapping::new(source, target, g(&[("s", "x"), ("a", "t"), ("b", "t")]), Mode::C).unwrap();
        let r = check_conditions(&m);
        assert_eq!(r.condition("C5").unwrap().verdict, Verdict::No);
        assert_eq!(
            r.condition("C5").unwrap().witness,
            Some(Witness::Collision {
                left: "a".into(),
                right: "b".into(),
                image: "t".into()
            })
        );
        assert_eq!(r.conclusion, Conclusion::Inconclusive);
    }

    #[test]
    fn cprime_detects_non_surjective_and_backward_failures() {
        let source = Pars::plain(["0", "a", "1", "b"], [("0", "a"), ("1", "b")]).unwrap();
        let target = Pars::plain(["n", "t", "u", "extra"], [("n", "t"), ("n", "u")]).unwrap();
        let m = TransformMapping::new(
            source,
            target,
            g(&[("0", "n"), ("1", "n"), ("a", "t"), ("b", "u")]),
            Mode::Cprime,
        )
        .unwrap();
        let r = check_conditions(&m);
        assert_eq!(r.condition("C1'").unwrap().witness, Some(Witness::State { state: "extra".into() }));
        // 0 and 1 share an image class in the target but are unrelated in the source
        assert_eq!(r.condition("C3'").unwrap().verdict, Verdict::No);
        assert!(matches!(r.condition("C3'").unwrap().witness, Some(Witness::Pair { .. })));
    }

    #[test]
    fn mapping_document() {
        let doc = MappingDocument::from_json(
            r#"{"mode": "C", "target": {"kind": "ars", "states": ["0", "a"], "rules": [{"from": "0", "to": "a"}]},
                "G": {"0": "0", "a": "a"}}"#,
        )
        .unwrap();
        assert_eq!(doc.mode, Some(Mode::C));
        assert!(doc.source.is_none());
        let target = Pars::from_document(doc.target.as_ref().unwrap()).unwrap();
        let m = TransformMapping::new(loop_exit(), target, doc.mapping(), Mode::C).unwrap();
        assert!(check_conditions(&m).all_hold());
        assert!(MappingDocument::from_json(r#"{"G": {}, "extra": 1}"#).is_err());
    }

    #[test]
    fn conclude_needs_termination_evidence() {
        let target = Pars::plain(["0", "a"], [("0", "a")]).unwrap();
        let m = TransformMapping::new(loop_exit(), target, g(&[("0", "0"), ("a", "a")]), Mode::C).unwrap();
        let r = check_conditions(&m);
        let unknown = Decision {
            property: ars::Property::AsTermination,
            verdict: Verdict::Unknown,
            witness: None,
            notes: vec![],
        };
        assert_eq!(conclude(&r, &unknown), Conclusion::Inconclusive);
        let yes = crate::prob::check_as_termination(&m.source).unwrap();
        assert_eq!(conclude(&r, &yes), Conclusion::SourceAsConvergent);
    }
}
