//! Scheme parameters and the closed-form quantities derived from them.

use rug::ops::Pow;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::moments::GMoments;
use crate::precision;
use crate::{Error, Result};

/// `N` cells and `s` sets of sizes `n_1, …, n_s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeParams {
    cells: usize,
    sets: Vec<usize>,
}

impl SchemeParams {
    /// Validates `N >= 2`, `s >= 1` and `1 <= n_l <= N - 1`.
    pub fn new(cells: usize, sets: Vec<usize>) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Domain(format!("need at least 2 cells, got N = {cells}")));
        }
        if sets.is_empty() {
            return Err(Error::Domain("need at least one set".into()));
        }
        if let Some((l, &n)) = sets.iter().enumerate().find(|(_, &n)| n == 0 || n >= cells) {
            return Err(Error::Domain(format!(
                "set {} has size {n}; sizes must lie in 1..={} for N = {cells}",
                l + 1,
                cells - 1
            )));
        }
        Ok(Self { cells, sets })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn sets(&self) -> &[usize] {
        &self.sets
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn max_set(&self) -> usize {
        *self.sets.iter().max().expect("validated non-empty")
    }

    /// Smallest possible number of empty cells, `max(0, N - Σ n_l)`.
    pub fn support_min(&self) -> usize {
        self.cells.saturating_sub(self.sets.iter().sum())
    }

    /// Largest possible number of empty cells, `N - max n_l`.
    pub fn support_max(&self) -> usize {
        self.cells - self.max_set()
    }
}

impl std::fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sets: Vec<String> = self.sets.iter().map(|n| n.to_string()).collect();
        write!(f, "N={}, n=({})", self.cells, sets.join(","))
    }
}

/// Every scalar the expansions need, exact where rational.
#[derive(Debug, Clone)]
pub struct DerivedParams {
    pub params: SchemeParams,
    pub p: Vec<Rational>,
    pub q: Vec<Rational>,
    /// `r_l = p_l / q_l`
    pub r: Vec<Rational>,
    /// `Q_s = ∏ q_l`, the probability that a given cell stays empty.
    pub q_s: Rational,
    /// `P_s = ∏ p_l`
    pub p_s: Rational,
    pub n_max: usize,
    /// `E μ₀ = N Q_s`
    pub mean_mu0: Rational,
    /// `σ² = Q_s (1 - Q_s (1 + Σ r_l))`
    pub sigma2: Rational,
    /// `max_l min(Q_s² r_l, P_s² / r_l)`
    pub alpha: Rational,
    b_n: Rational,
    /// Exact variance of μ₀, `N σ² (1 + b_N)`.
    pub var_mu0: Rational,
    /// `e_ν(r_1, …, r_s)` for `ν = 0..=s`.
    pub elem_sym: Vec<Rational>,
}

/// Elementary symmetric polynomials of `values`, by expanding `∏ (1 + x v)`.
pub fn elementary_symmetric(values: &[Rational]) -> Vec<Rational> {
    let mut e = vec![Rational::from(1)];
    for v in values {
        e.push(Rational::new());
        for nu in (1..e.len()).rev() {
            let term = Rational::from(&e[nu - 1] * v);
            e[nu] += term;
        }
    }
    e
}

pub fn derive(params: &SchemeParams) -> DerivedParams {
    let n_cells = params.cells() as u64;
    let p: Vec<Rational> = params
        .sets()
        .iter()
        .map(|&n| Rational::from((n as u64, n_cells)))
        .collect();
    let q: Vec<Rational> = p.iter().map(|p| Rational::from(1 - p)).collect();
    let r: Vec<Rational> = p.iter().zip(&q).map(|(p, q)| Rational::from(p / q)).collect();
    let q_s = q.iter().fold(Rational::from(1), |acc, q| acc * q);
    let p_s = p.iter().fold(Rational::from(1), |acc, p| acc * p);
    let mean_mu0 = Rational::from(&q_s * n_cells);
    let r_sum = r.iter().fold(Rational::new(), |acc, r| acc + r);
    let sigma2 = Rational::from(&q_s * (1 - Rational::from(&q_s * (1 + r_sum))));

    let q_s2 = Rational::from(q_s.square_ref());
    let p_s2 = Rational::from(p_s.square_ref());
    let alpha = r
        .iter()
        .map(|r| {
            let a = Rational::from(&q_s2 * r);
            let b = Rational::from(&p_s2 / r);
            a.min(b)
        })
        .max()
        .expect("at least one set");

    let elem_sym = elementary_symmetric(&r);

    // Σ_{ν ≥ 2} (-1)^ν e_ν / (N-1)^{ν-1}, summed over unordered ν-subsets.
    let m = Rational::from(n_cells - 1);
    let mut correction = Rational::new();
    let mut power = m.clone();
    for (nu, e) in elem_sym.iter().enumerate().skip(2) {
        let term = Rational::from(e / &power);
        if nu % 2 == 0 {
            correction += term;
        } else {
            correction -= term;
        }
        power *= &m;
    }
    let var_excess = Rational::from(&q_s2 * &correction) * n_cells;
    let n_sigma2 = Rational::from(&sigma2 * n_cells);
    let var_mu0 = Rational::from(&n_sigma2 + &var_excess);
    let b_n = if sigma2 == 0 {
        Rational::new()
    } else {
        var_excess / n_sigma2
    };

    DerivedParams {
        params: params.clone(),
        n_max: params.max_set(),
        p,
        q,
        r,
        q_s,
        p_s,
        mean_mu0,
        sigma2,
        alpha,
        b_n,
        var_mu0,
        elem_sym,
    }
}

impl DerivedParams {
    pub fn cells(&self) -> usize {
        self.params.cells()
    }

    pub fn num_sets(&self) -> usize {
        self.params.num_sets()
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma2 == 0
    }

    /// Relative variance correction `b_N` with `Var μ₀ = N σ² (1 + b_N)`.
    pub fn b_n(&self) -> Result<&Rational> {
        self.require_sigma()?;
        Ok(&self.b_n)
    }

    /// `b̃_N = N b_N`
    pub fn b_n_tilde(&self) -> Result<Rational> {
        Ok(Rational::from(self.b_n()? * self.cells() as u64))
    }

    pub fn require_sigma(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::DegenerateSigma(self.params.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn sigma(&self) -> Float {
        precision::sqrt_rational(&self.sigma2)
    }

    /// `√N σ`, the scale of the fixed-`s` expansion.
    pub fn sqrt_n_sigma(&self) -> Float {
        precision::sqrt_rational(&Rational::from(&self.sigma2 * self.cells() as u64))
    }

    /// `min_l p_l q_l`
    pub fn min_pq(&self) -> Rational {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(p, q)| Rational::from(p * q))
            .min()
            .expect("at least one set")
    }
}

/// Quantities appearing in the sufficient conditions of the expansion
/// theorems. The constants in those conditions are unknown, so these are
/// only reported.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// `√N min((E|g̃|³)^{-1}, √(p_l q_l))`
    pub t_n: f64,
    /// `N^{-3/2} (E|g̃|⁵ + Σ (p_l q_l)^{-3/2} (p_l⁴ + q_l⁴))`
    pub l_n: f64,
    /// `(E|g̃| / E|g̃|³) / min_l p_l q_l`
    pub ratio_325: f64,
    /// `σ E|g̃|³`
    pub sigma_eg3: f64,
}

pub fn diagnostics(derived: &DerivedParams, gmom: &GMoments) -> Result<Diagnostics> {
    derived.require_sigma()?;
    let prec = precision::working();
    let abs = gmom.abs.as_ref().ok_or_else(|| {
        Error::DegenerateInput("absolute moments of g̃ are required for diagnostics".into())
    })?;
    let n = derived.cells() as u64;
    let sqrt_n = Float::with_val(prec, n).sqrt();

    let inv_e3 = Float::with_val(prec, 1u32) / &abs.e3;
    let min_root_pq = precision::sqrt_rational(&derived.min_pq());
    let t_n = Float::with_val(prec, &sqrt_n * inv_e3.min(&min_root_pq));

    let mut tail = Float::with_val(prec, &abs.e5);
    for (p, q) in derived.p.iter().zip(&derived.q) {
        let pq = precision::from_rational(&Rational::from(p * q));
        let fourth = Rational::from(p.square_ref()).square() + Rational::from(q.square_ref()).square();
        let pq_pow = pq.pow(Float::with_val(prec, -1.5));
        tail += pq_pow * precision::from_rational(&fourth);
    }
    let n_pow = Float::with_val(prec, n).pow(Float::with_val(prec, -1.5));
    let l_n = tail * n_pow;

    let ratio = Float::with_val(prec, &abs.e1 / &abs.e3) / precision::from_rational(&derived.min_pq());
    let sigma_eg3 = derived.sigma() * &abs.e3;

    Ok(Diagnostics {
        t_n: t_n.to_f64(),
        l_n: l_n.to_f64(),
        ratio_325: ratio.to_f64(),
        sigma_eg3: sigma_eg3.to_f64(),
    })
}
