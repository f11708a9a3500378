//! Monte Carlo simulation of the allocation scheme.
//!
//! Trial `i` draws from a ChaCha8 generator seeded with `seed` on stream
//! `i`, so counts depend only on `(seed, params, trials)` and never on the
//! number of worker threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::scheme::SchemeParams;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub params: SchemeParams,
}

impl SimConfig {
    pub fn new(params: SchemeParams, trials: u64, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        Ok(Self { trials, seed, params })
    }
}

/// Reusable buffers for [`allocate_once`].
#[derive(Debug, Clone)]
pub struct Scratch {
    cells: Vec<usize>,
    hit: Vec<bool>,
    swaps: Vec<usize>,
}

impl Scratch {
    pub fn new(cells: usize) -> Self {
        Self { cells: (0..cells).collect(), hit: vec![false; cells], swaps: Vec::new() }
    }
}

/// Draw each set as a uniform `n_l`-subset by a partial Fisher–Yates
/// shuffle and return the number of cells no set touched.
pub fn allocate_once<R: Rng + ?Sized>(params: &SchemeParams, rng: &mut R, scratch: &mut Scratch) -> usize {
    let n = params.cells();
    debug_assert_eq!(scratch.cells.len(), n);
    scratch.hit.iter_mut().for_each(|h| *h = false);
    for &size in params.sets() {
        scratch.swaps.clear();
        for i in 0..size {
            let j = rng.gen_range(i..n);
            scratch.cells.swap(i, j);
            scratch.swaps.push(j);
            scratch.hit[scratch.cells[i]] = true;
        }
        // undo in reverse so the buffer is the identity again
        for (i, &j) in scratch.swaps.iter().enumerate().rev() {
            scratch.cells.swap(i, j);
        }
    }
    scratch.hit.iter().filter(|h| !**h).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalPmf {
    pub counts: BTreeMap<usize, u64>,
    pub trials: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalRow {
    pub k: usize,
    pub count: u64,
    pub freq: f64,
    pub std_error: f64,
}

impl EmpiricalPmf {
    pub fn frequencies(&self) -> BTreeMap<usize, f64> {
        self.counts.iter().map(|(k, c)| (*k, *c as f64 / self.trials as f64)).collect()
    }

    /// Frequency with its binomial standard error `√(f(1-f)/trials)`.
    pub fn rows(&self) -> Vec<EmpiricalRow> {
        self.counts
            .iter()
            .map(|(k, c)| {
                let freq = *c as f64 / self.trials as f64;
                EmpiricalRow { k: *k, count: *c, freq, std_error: (freq * (1.0 - freq) / self.trials as f64).sqrt() }
            })
            .collect()
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

const CHUNK: u64 = 4096;

pub fn empirical_pmf(config: &SimConfig) -> EmpiricalPmf {
    let chunks = config.trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Scratch::new(config.params.cells());
            let mut local: BTreeMap<usize, u64> = BTreeMap::new();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(config.trials) {
                let mut rng = trial_rng(config.seed, trial);
                *local.entry(allocate_once(&config.params, &mut rng, &mut scratch)).or_default() += 1;
            }
            local
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_default() += c;
            }
            a
        });
    EmpiricalPmf { counts, trials: config.trials }
}

/// Sample mean and `4 · sd / √trials`.
pub fn mc_mean_ci(emp: &EmpiricalPmf) -> Result<(f64, f64)> {
    if emp.trials < 2 {
        return Err(Error::Domain("at least two trials are needed for an interval".into()));
    }
    let n = emp.trials as f64;
    let mean = emp.counts.iter().map(|(k, c)| *k as f64 * *c as f64).sum::<f64>() / n;
    let ss: f64 = emp.counts.iter().map(|(k, c)| (*k as f64 - mean).powi(2) * *c as f64).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    Ok((mean, 4.0 * sd / n.sqrt()))
}
