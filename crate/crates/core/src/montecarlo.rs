//! Monte Carlo estimation of reaching probabilities.
//!
//! Samples are split into fixed-size chunks; chunk `k` draws from a ChaCha
//! stream keyed by `(seed, k)`. The estimate is therefore identical whether
//! chunks run on the rayon pool or sequentially.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rational::to_f64;
use crate::system::{Analyzable, StateId};

const CHUNK: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct McReport {
    pub start: StateId,
    pub seed: u64,
    pub samples: u64,
    pub max_steps: u64,
    /// Runs absorbed in each normal form.
    pub absorbed: BTreeMap<StateId, u64>,
    /// Runs still reducible after `max_steps` reductions.
    pub censored: u64,
    /// Runs that walked into an unexpanded frontier state.
    pub frontier: u64,
}

impl McReport {
    pub fn fraction(&self, t: &StateId) -> f64 {
        self.absorbed.get(t).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.samples as f64
    }
}

#[derive(Default)]
struct Tally {
    absorbed: Vec<u64>,
    censored: u64,
    frontier: u64,
}

pub fn monte_carlo<A: Analyzable + Sync>(
    system: &A,
    start: &StateId,
    max_steps: u64,
    samples: u64,
    seed: u64,
) -> Result<McReport> {
    monte_carlo_with(system, start, max_steps, samples, seed, Execution::Parallel)
}

pub fn monte_carlo_with<A: Analyzable + Sync>(
    system: &A,
    start: &StateId,
    max_steps: u64,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<McReport> {
    let sys = system.system();
    if !sys.is_probabilistic() {
        return Err(Error::NotProbabilistic);
    }
    if samples == 0 {
        return Err(Error::Precondition("samples must be at least 1".into()));
    }
    let s0 = sys.require(start)?;
    let n = sys.len();

    // cumulative f64 tables; sampling needs no exactness
    let tables: Vec<Vec<(f64, usize)>> = (0..n)
        .map(|u| {
            let mut acc = 0.0;
            sys.weighted(u)
                .map(|(v, p)| {
                    acc += to_f64(p);
                    (acc, v)
                })
                .collect()
        })
        .collect();
    let frontier: Vec<bool> = (0..n).map(|i| system.is_frontier(i)).collect();

    let chunks = samples.div_ceil(CHUNK);
    let tallies = par::map_indices(exec, chunks as usize, |k| {
        let k = k as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        let count = CHUNK.min(samples - k * CHUNK);
        let mut tally = Tally {
            absorbed: vec![0; n],
            ..Tally::default()
        };
        for _ in 0..count {
            let mut u = s0;
            let mut steps = 0;
            loop {
                if frontier[u] {
                    tally.frontier += 1;
                    break;
                }
                let table = &tables[u];
                if table.is_empty() {
                    tally.absorbed[u] += 1;
                    break;
                }
                if steps == max_steps {
                    tally.censored += 1;
                    break;
                }
                let x: f64 = rng.random::<f64>() * table[table.len() - 1].0;
                u = table
                    .iter()
                    .find(|(c, _)| x < *c)
                    .map(|(_, v)| *v)
                    .unwrap_or(table[table.len() - 1].1);
                steps += 1;
            }
        }
        tally
    });

    let mut absorbed = vec![0u64; n];
    let (mut censored, mut front) = (0, 0);
    for t in tallies {
        for (acc, c) in absorbed.iter_mut().zip(t.absorbed) {
            *acc += c;
        }
        censored += t.censored;
        front += t.frontier;
    }
    Ok(McReport {
        start: start.clone(),
        seed,
        samples,
        max_steps,
        absorbed: absorbed
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .map(|(i, c)| (sys.state(i).clone(), c))
            .collect(),
        censored,
        frontier: front,
    })
}
