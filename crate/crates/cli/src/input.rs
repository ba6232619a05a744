//! Resolves command-line paths: files, or `corpus:<name>` for built-in entries.

use std::fs;

use anyhow::{Context, Result};
use parskit::corpus::{self, CorpusEntry, CorpusSystem};
use parskit::{load_system, GeneratedPars, Pars};

const CORPUS_PREFIX: &str = "corpus:";

pub enum Subject {
    Finite(Pars),
    Generated(GeneratedPars),
}

pub struct Input {
    /// Bytes the report digest is computed over.
    pub bytes: Vec<u8>,
    pub subject: Subject,
    pub entry: Option<CorpusEntry>,
}

pub fn corpus_name(path: &str) -> Option<&str> {
    path.strip_prefix(CORPUS_PREFIX)
}

pub fn entry(name: &str) -> Result<CorpusEntry> {
    Ok(corpus::builtin(name)?)
}

/// Raw text of a file argument.
pub fn read(path: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {path}"))
}

pub fn load(path: &str) -> Result<Input> {
    if let Some(name) = corpus_name(path) {
        let e = entry(name)?;
        let (subject, bytes) = match &e.system {
            CorpusSystem::Finite(p) => (Subject::Finite(p.clone()), p.to_json().into_bytes()),
            CorpusSystem::Generated(g) => (Subject::Generated(g.clone()), path.as_bytes().to_vec()),
        };
        return Ok(Input {
            bytes,
            subject,
            entry: Some(e),
        });
    }
    let text = read(path)?;
    let system = load_system(&text)?;
    Ok(Input {
        bytes: text.into_bytes(),
        subject: Subject::Finite(system),
        entry: None,
    })
}

/// Loads a system that must be finite.
pub fn load_finite(path: &str) -> Result<(Pars, Vec<u8>)> {
    let input = load(path)?;
    match input.subject {
        Subject::Finite(p) => Ok((p, input.bytes)),
        Subject::Generated(g) => {
            let w = parskit::explore(&g, 0)?;
            Err(parskit::Error::FrontierPresent(w.frontier.into_iter().collect()).into())
        }
    }
}
