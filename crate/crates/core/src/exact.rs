//! The exact distribution of μ₀.
//!
//! `P{μ₀ = k} = C(N,k) Σ_j (-1)^j C(N-k, j) ∏_l C(N-k-j, n_l) / C(N, n_l)`
//! follows from inclusion–exclusion over the cells that must stay empty.
//! Every allocation of the `s` sets has probability `∏ C(N, n_l)^{-1}`, so
//! the inner sum is an integer and one exact division per `k` suffices.
//! [`enumerate_pmf`] is an independent brute-force check.

use rayon::prelude::*;
use rug::{Complex, Float, Integer, Rational};

use crate::binomial::BinomialTable;
use crate::precision;
use crate::scheme::SchemeParams;
use crate::{Error, Result};

pub const DEFAULT_MAX_CELLS: usize = 500;
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Exact PMF of μ₀, stored over `[support_min, support_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPmf {
    pub params: SchemeParams,
    pub support_min: usize,
    pub support_max: usize,
    probs: Vec<Rational>,
}

impl ExactPmf {
    pub(crate) fn from_parts(params: SchemeParams, probs: Vec<Rational>) -> Self {
        let support_min = params.support_min();
        let support_max = params.support_max();
        debug_assert_eq!(probs.len(), support_max - support_min + 1);
        Self { params, support_min, support_max, probs }
    }

    /// `P{μ₀ = k}`; zero outside the support.
    pub fn prob(&self, k: usize) -> Rational {
        if k < self.support_min || k > self.support_max {
            Rational::new()
        } else {
            self.probs[k - self.support_min].clone()
        }
    }

    /// `(k, P{μ₀ = k})` over the support.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.probs.iter().enumerate().map(move |(i, p)| (i + self.support_min, p))
    }

    pub fn total(&self) -> Rational {
        self.probs.iter().fold(Rational::new(), |acc, p| acc + p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Largest `N` accepted by [`exact_pmf_with`].
    pub max_cells: usize,
    /// Largest `∏ C(N, n_l)` accepted by [`enumerate_pmf_with`].
    pub enumeration_cap: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_cells: DEFAULT_MAX_CELLS, enumeration_cap: DEFAULT_ENUMERATION_CAP }
    }
}

pub fn exact_pmf(params: &SchemeParams) -> Result<ExactPmf> {
    exact_pmf_with(params, &OracleLimits::default())
}

pub fn exact_pmf_with(params: &SchemeParams, limits: &OracleLimits) -> Result<ExactPmf> {
    let n = params.cells();
    if n > limits.max_cells {
        return Err(Error::Resource {
            what: "N",
            value: n.to_string(),
            cap: limits.max_cells.to_string(),
        });
    }
    let table = BinomialTable::new(n);
    let denom = params
        .sets()
        .iter()
        .fold(Integer::from(1), |acc, &m| acc * table.get(n, m));
    let n_max = params.max_set();

    let probs: Vec<Rational> = (params.support_min()..=params.support_max())
        .into_par_iter()
        .map(|k| {
            let free = n - k;
            let mut sum = Integer::new();
            // terms vanish once fewer than n_max cells remain available
            for j in 0..=(free - n_max) {
                let mut term = table.get(free, j);
                for &m in params.sets() {
                    term *= table.get(free - j, m);
                }
                if j % 2 == 0 {
                    sum += term;
                } else {
                    sum -= term;
                }
            }
            Rational::from((sum * table.get(n, k), denom.clone()))
        })
        .collect();

    Ok(ExactPmf::from_parts(params.clone(), probs))
}

pub fn enumerate_pmf(params: &SchemeParams) -> Result<ExactPmf> {
    enumerate_pmf_with(params, &OracleLimits::default())
}

/// PMF by visiting every joint allocation of the sets.
pub fn enumerate_pmf_with(params: &SchemeParams, limits: &OracleLimits) -> Result<ExactPmf> {
    let n = params.cells();
    let table = BinomialTable::new(n);
    let total = params
        .sets()
        .iter()
        .fold(Integer::from(1), |acc, &m| acc * table.get(n, m));
    if total > limits.enumeration_cap {
        return Err(Error::Resource {
            what: "number of joint allocations",
            value: total.to_string(),
            cap: limits.enumeration_cap.to_string(),
        });
    }

    let mut state = Enumeration {
        cover: vec![0u32; n],
        empty: n,
        counts: vec![0u64; n + 1],
    };
    state.visit(params.sets(), n);

    let lo = params.support_min();
    let hi = params.support_max();
    if state.counts.iter().enumerate().any(|(k, &c)| c > 0 && (k < lo || k > hi)) {
        return Err(Error::DegenerateInput("enumeration produced a count outside the support".into()));
    }
    let probs = (lo..=hi)
        .map(|k| Rational::from((Integer::from(state.counts[k]), total.clone())))
        .collect();
    Ok(ExactPmf::from_parts(params.clone(), probs))
}

struct Enumeration {
    cover: Vec<u32>,
    empty: usize,
    counts: Vec<u64>,
}

impl Enumeration {
    fn visit(&mut self, sets: &[usize], n: usize) {
        let Some((&size, rest)) = sets.split_first() else {
            self.counts[self.empty] += 1;
            return;
        };
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            for &c in &idx {
                if self.cover[c] == 0 {
                    self.empty -= 1;
                }
                self.cover[c] += 1;
            }
            self.visit(rest, n);
            for &c in &idx {
                self.cover[c] -= 1;
                if self.cover[c] == 0 {
                    self.empty += 1;
                }
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
}

/// Advance `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; false once the last one has been passed.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact mean and central moments of orders 2 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfMoments {
    pub mean: Rational,
    pub variance: Rational,
    pub third_central: Rational,
    pub fourth_central: Rational,
}

pub fn pmf_moments(pmf: &ExactPmf) -> PmfMoments {
    let mean = pmf
        .iter()
        .fold(Rational::new(), |acc, (k, p)| acc + Rational::from(p * k as u64));
    let mut central = [Rational::new(), Rational::new(), Rational::new()];
    for (k, p) in pmf.iter() {
        let d = Rational::from(k as u64) - &mean;
        let d2 = Rational::from(d.square_ref());
        let d3 = Rational::from(&d2 * &d);
        let d4 = Rational::from(d2.square_ref());
        central[0] += d2 * p;
        central[1] += d3 * p;
        central[2] += d4 * p;
    }
    let [variance, third_central, fourth_central] = central;
    PmfMoments { mean, variance, third_central, fourth_central }
}

/// `Σ_k P{μ₀=k} exp(i t (k - center) / scale)` at working precision.
pub fn exact_charfun(pmf: &ExactPmf, t: f64, center: &Float, scale: &Float) -> Complex {
    let prec = precision::working();
    let mut acc = Complex::with_val(prec, (0, 0));
    for (k, p) in pmf.iter() {
        if *p == 0 {
            continue;
        }
        let shifted = Float::with_val(prec, k as u64) - center;
        let angle = Float::with_val(prec, shifted * t) / scale;
        let (sin, cos) = angle.sin_cos(Float::new(prec));
        let weight = precision::from_rational(p);
        acc += Complex::with_val(prec, (cos * &weight, sin * &weight));
    }
    acc
}

/// Total variation distance between the exact PMF and empirical frequencies.
pub fn total_variation(pmf: &ExactPmf, freqs: &std::collections::BTreeMap<usize, f64>) -> f64 {
    let mut dist = 0.0;
    for (k, p) in pmf.iter() {
        dist += (p.to_f64() - freqs.get(&k).copied().unwrap_or(0.0)).abs();
    }
    for (k, f) in freqs {
        if *k < pmf.support_min || *k > pmf.support_max {
            dist += f.abs();
        }
    }
    dist / 2.0
}
