//! Lyapunov ranking certificates.
//!
//! A certificate is a nonnegative valuation `V` and a margin `eps > 0`. It
//! holds when every checked reducible state satisfies
//! `V(s) >= sum_{s -> s'} P(s -> s') * V(s') + eps`. On a finite system that
//! proves almost-sure termination; on an exploration window it is evidence
//! for the states inside the window only.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rational::{parse_prob, Prob};
use crate::system::{Analyzable, StateId};

pub type ValuationFn = Arc<dyn Fn(&StateId) -> Option<Prob> + Send + Sync>;

#[derive(Clone)]
pub enum Valuation {
    Table(BTreeMap<StateId, Prob>),
    /// A named closed-form valuation, e.g. one shipped with a corpus entry.
    Formula { name: String, f: ValuationFn },
}

impl fmt::Debug for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Table(t) => f.debug_tuple("Table").field(t).finish(),
            Valuation::Formula { name, .. } => f.debug_struct("Formula").field("name", name).finish(),
        }
    }
}

impl Valuation {
    pub fn formula<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&StateId) -> Option<Prob> + Send + Sync + 'static,
    {
        Valuation::Formula {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn value(&self, s: &StateId) -> Option<Prob> {
        match self {
            Valuation::Table(t) => t.get(s).cloned(),
            Valuation::Formula { f, .. } => f(s),
        }
    }

    /// Multiplies every value by `k`.
    pub fn scaled(&self, k: Prob) -> Valuation {
        let inner = self.clone();
        Valuation::formula("scaled", move |s| inner.value(s).map(|v| v * &k))
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovCertificate {
    pub valuation: Valuation,
    pub epsilon: Prob,
    /// Human-readable argument for states beyond any finite check, printed
    /// but not verified.
    pub argument: Option<String>,
}

impl LyapunovCertificate {
    pub fn new(valuation: Valuation, epsilon: Prob) -> Self {
        LyapunovCertificate {
            valuation,
            epsilon,
            argument: None,
        }
    }

    pub fn with_argument(mut self, argument: impl Into<String>) -> Self {
        self.argument = Some(argument.into());
        self
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ValuationDocument {
    Builtin { builtin: String },
    Table(BTreeMap<String, String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateDocument {
    valuation: ValuationDocument,
    epsilon: String,
    #[serde(default)]
    argument: Option<String>,
}

impl LyapunovCertificate {
    /// Reads `{"valuation": {state: "p/q", ...} | {"builtin": name}, "epsilon": "p/q"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CertificateDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let valuation = match doc.valuation {
            ValuationDocument::Builtin { builtin } => crate::corpus::builtin_valuation(&builtin)
                .ok_or_else(|| Error::UnknownEntry(format!("valuation {builtin}")))?,
            ValuationDocument::Table(t) => Valuation::Table(
                t.into_iter()
                    .map(|(s, v)| Ok((StateId::new(s), parse_prob(&v)?)))
                    .collect::<Result<_>>()?,
            ),
        };
        let mut cert = LyapunovCertificate::new(valuation, parse_prob(&doc.epsilon)?);
        cert.argument = doc.argument;
        Ok(cert)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coverage {
    Full,
    Bounded { depth: usize, frontier: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertVerdict {
    /// Margins hold everywhere on a finite system: almost-sure termination.
    Certified,
    /// Margins hold on every expanded state of a window.
    Evidence { depth: usize },
    Violated {
        state: StateId,
        #[serde(with = "crate::rational::serde_prob")]
        margin: Prob,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MarginReport {
    #[serde(with = "crate::rational::serde_prob_map")]
    pub margins: BTreeMap<StateId, Prob>,
    #[serde(with = "crate::rational::serde_prob")]
    pub epsilon: Prob,
    pub verdict: CertVerdict,
    pub states_checked: usize,
    pub coverage: Coverage,
}

impl MarginReport {
    pub fn holds(&self) -> bool {
        !matches!(self.verdict, CertVerdict::Violated { .. })
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == CertVerdict::Certified
    }
}

pub fn check_lyapunov<A: Analyzable + Sync>(system: &A, cert: &LyapunovCertificate) -> Result<MarginReport> {
    check_lyapunov_with(system, cert, Execution::Parallel)
}

pub fn check_lyapunov_with<A: Analyzable + Sync>(
    system: &A,
    cert: &LyapunovCertificate,
    exec: Execution,
) -> Result<MarginReport> {
    if !cert.epsilon.is_positive() {
        return Err(Error::NonPositiveEpsilon);
    }
    let sys = system.system();
    if !sys.is_probabilistic() {
        return Err(Error::NotProbabilistic);
    }
    let values: Vec<Result<Prob>> = par::map_indices(exec, sys.len(), |i| {
        let s = sys.state(i);
        let v = cert.valuation.value(s).ok_or_else(|| Error::MissingValuation(s.clone()))?;
        if v.is_negative() {
            return Err(Error::NegativeValuation(s.clone()));
        }
        Ok(v)
    });
    let values: Vec<Prob> = values.into_iter().collect::<Result<_>>()?;

    let margins: Vec<Option<Prob>> = par::map_indices(exec, sys.len(), |i| {
        if sys.is_normal_form_idx(i) || system.is_frontier(i) {
            return None;
        }
        let expected = sys.weighted(i).fold(Prob::zero(), |acc, (j, p)| acc + p * &values[j]);
        Some(&values[i] - expected)
    });
    let margins: BTreeMap<StateId, Prob> = margins
        .into_iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (sys.state(i).clone(), m)))
        .collect();

    let coverage = if system.has_frontier() {
        Coverage::Bounded {
            depth: system.window_depth().unwrap_or(0),
            frontier: system.frontier_states().len(),
        }
    } else {
        Coverage::Full
    };
    let violation = margins.iter().find(|(_, m)| **m < cert.epsilon);
    let verdict = match (violation, &coverage) {
        (Some((s, m)), _) => CertVerdict::Violated {
            state: s.clone(),
            margin: m.clone(),
        },
        (None, Coverage::Full) => CertVerdict::Certified,
        (None, Coverage::Bounded { depth, .. }) => CertVerdict::Evidence { depth: *depth },
    };
    Ok(MarginReport {
        states_checked: margins.len(),
        margins,
        epsilon: cert.epsilon.clone(),
        verdict,
        coverage,
    })
}

/// Lexicographically first state attaining the minimum margin.
pub fn min_margin(report: &MarginReport) -> Result<(StateId, Prob)> {
    let mut best: Option<(&StateId, &Prob)> = None;
    for (s, m) in &report.margins {
        if best.is_none_or(|(_, b)| m < b) {
            best = Some((s, m));
        }
    }
    best.map(|(s, m)| (s.clone(), m.clone())).ok_or(Error::EmptyReport)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::system::Pars;

    fn coin() -> Pars {
        Pars::probabilistic(
            ["0", "1", "a"],
            [("0", "1", ratio(1, 1)), ("1", "1", ratio(1, 2)), ("1", "a", ratio(1, 2))],
        )
        .unwrap()
    }

    fn table(entries: &[(&str, i64)]) -> Valuation {
        Valuation::Table(entries.iter().map(|(s, v)| (StateId::from(*s), ratio(*v, 1))).collect())
    }

    #[test]
    fn constant_valuation_fails() {
        let cert = LyapunovCertificate::new(table(&[("0", 1), ("1", 1), ("a", 1)]), ratio(1, 10));
        let r = check_lyapunov(&coin(), &cert).unwrap();
        assert!(!r.holds());
        assert_eq!(
            r.verdict,
            CertVerdict::Violated {
                state: "0".into(),
                margin: ratio(0, 1)
            }
        );
    }

    #[test]
    fn coin_certificate() {
        // V(1) = 2: 2 - (1/2*2 + 1/2*0) = 1 ; V(0) = 3: 3 - 2 = 1
        let cert = LyapunovCertificate::new(table(&[("0", 3), ("1", 2), ("a", 0)]), ratio(1, 1));
        let r = check_lyapunov(&coin(), &cert).unwrap();
        assert!(r.is_certified());
        assert_eq!(r.states_checked, 2);
        assert_eq!(min_margin(&r).unwrap(), (StateId::from("0"), ratio(1, 1)));
    }

    #[test]
    fn errors() {
        let cert = LyapunovCertificate::new(table(&[("0", 3), ("1", 2)]), ratio(1, 1));
        assert!(matches!(check_lyapunov(&coin(), &cert), Err(Error::MissingValuation(s)) if s.as_str() == "a"));
        let cert = LyapunovCertificate::new(table(&[("0", 3), ("1", 2), ("a", 0)]), ratio(0, 1));
        assert!(matches!(check_lyapunov(&coin(), &cert), Err(Error::NonPositiveEpsilon)));
        let cert = LyapunovCertificate::new(table(&[("0", 3), ("1", 2), ("a", -1)]), ratio(1, 1));
        assert!(matches!(check_lyapunov(&coin(), &cert), Err(Error::NegativeValuation(_))));
    }

    #[test]
    fn certificate_documents() {
        let cert = LyapunovCertificate::from_json(r#"{"valuation": {"0": "3", "1": "2", "a": "0"}, "epsilon": "1"}"#).unwrap();
        assert!(check_lyapunov(&coin(), &cert).unwrap().is_certified());
        let cert = LyapunovCertificate::from_json(r#"{"valuation": {"builtin": "herman3"}, "epsilon": "1/2"}"#).unwrap();
        assert_eq!(cert.valuation.value(&"[101]".into()), Some(ratio(13, 1)));
        assert!(LyapunovCertificate::from_json(r#"{"valuation": {"builtin": "nope"}, "epsilon": "1"}"#).is_err());
        assert!(LyapunovCertificate::from_json(r#"{"valuation": {}, "epsilon": "x"}"#).is_err());
    }

    #[test]
    fn empty_report() {
        let nf = Pars::probabilistic(["t"], Vec::<(&str, &str, Prob)>::new()).unwrap();
        let cert = LyapunovCertificate::new(table(&[("t", 0)]), ratio(1, 1));
        let r = check_lyapunov(&nf, &cert).unwrap();
        assert!(r.is_certified());
        assert!(matches!(min_margin(&r), Err(Error::EmptyReport)));
    }

    #[test]
    fn single_reducible_state_is_the_minimum() {
        let sys = Pars::probabilistic(["0", "a"], [("0", "a", ratio(1, 1))]).unwrap();
        let cert = LyapunovCertificate::new(table(&[("0", 5), ("a", 1)]), ratio(1, 1));
        let r = check_lyapunov(&sys, &cert).unwrap();
        assert_eq!(min_margin(&r).unwrap(), (StateId::from("0"), ratio(4, 1)));
    }
}
