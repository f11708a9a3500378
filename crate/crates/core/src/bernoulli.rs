//! Factorisation of the generating function `F(z) = E z^{μ₀}` into
//! Bernoulli factors.
//!
//! `F` is a real polynomial of degree `N - n_max` whose roots `-d_m` are all
//! real and non-positive, so `F(z) = ∏ (z + d_m) / (1 + d_m)` and μ₀ is
//! distributed as a sum of independent Bernoulli(`a_m`) variables with
//! `a_m = 1 / (1 + d_m)`.
//!
//! Roots are isolated on `(-B, 0)` (`B` a Cauchy bound) by bisection with an
//! exact root count per interval: for a real-rooted polynomial the number of
//! sign variations of the Möbius-transformed polynomial equals the number of
//! roots in the interval. Each isolated root is then refined by sign
//! bisection. Every sign is computed in exact integer arithmetic on the
//! original polynomial; nothing is deflated.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::Serialize;

use crate::exact::ExactPmf;
use crate::precision;
use crate::{Error, Result};

pub const DEFAULT_MAX_DEGREE: usize = 64;
/// Isolated roots are refined until the bracket is narrower than
/// `2^-REFINE_BITS · max(1, |root|)`.
pub const REFINE_BITS: u32 = 110;
/// Brackets this narrow that still hold several roots are reported as a
/// cluster.
pub const CLUSTER_BITS: u32 = 80;
pub const DEFAULT_RECONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct DecompOptions {
    pub max_degree: usize,
    /// Largest pointwise gap tolerated between the reconstructed and the
    /// exact PMF.
    pub reconstruction_tol: f64,
}

impl Default for DecompOptions {
    fn default() -> Self {
        Self { max_degree: DEFAULT_MAX_DEGREE, reconstruction_tol: DEFAULT_RECONSTRUCTION_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct BernoulliDecomposition {
    pub degree: usize,
    /// Roots `-d_m`, ascending, all `<= 0`.
    pub roots: Vec<Float>,
    /// `a_m = 1 / (1 + d_m)`, in the order of `roots`.
    pub a: Vec<Float>,
    /// Number of roots located exactly at `z = 0`.
    pub zero_roots: usize,
    /// `None` when every `a_m` is 0 or 1.
    pub l3: Option<Float>,
    pub l4: Option<Float>,
}

#[derive(Debug, Serialize)]
pub struct DecompositionJson {
    pub roots: Vec<f64>,
    pub a: Vec<f64>,
    #[serde(rename = "L3")]
    pub l3: Option<f64>,
    #[serde(rename = "L4")]
    pub l4: Option<f64>,
}

impl BernoulliDecomposition {
    pub fn to_json(&self) -> DecompositionJson {
        DecompositionJson {
            roots: self.roots.iter().map(Float::to_f64).collect(),
            a: self.a.iter().map(Float::to_f64).collect(),
            l3: self.l3.as_ref().map(Float::to_f64),
            l4: self.l4.as_ref().map(Float::to_f64),
        }
    }

    pub fn l3_l4(&self) -> Result<(Float, Float)> {
        match (&self.l3, &self.l4) {
            (Some(l3), Some(l4)) => Ok((l3.clone(), l4.clone())),
            _ => Err(Error::DegenerateVariance),
        }
    }
}

/// Coefficients of `F(z)` in ascending powers; `[z^k] = P{μ₀ = k}`.
pub fn pgf_coefficients(pmf: &ExactPmf) -> Vec<Rational> {
    (0..=pmf.support_max).map(|k| pmf.prob(k)).collect()
}

/// `L₃ = V^{-3/2} Σ a(1-a)(1-2a)` and `L₄ = V^{-2} Σ a(1-a)(1-6a(1-a))`
/// with `V = Σ a(1-a)`.
pub fn l3_l4(a: &[Float]) -> Result<(Float, Float)> {
    let prec = precision::working();
    let mut v = Float::new(prec);
    let mut third = Float::new(prec);
    let mut fourth = Float::new(prec);
    for am in a {
        let var = Float::with_val(prec, am * Float::with_val(prec, 1u32 - am));
        let skew = Float::with_val(prec, 1u32 - Float::with_val(prec, am * 2u32));
        let kurt = Float::with_val(prec, 1u32 - Float::with_val(prec, &var * 6u32));
        third += Float::with_val(prec, &var * skew);
        fourth += Float::with_val(prec, &var * kurt);
        v += var;
    }
    if v.is_zero() {
        return Err(Error::DegenerateVariance);
    }
    let l3 = third / Float::with_val(prec, (&v).pow(1.5f64));
    let l4 = fourth / Float::with_val(prec, v.square_ref());
    Ok((l3, l4))
}

/// Poisson-binomial PMF of the `a_m`, indexed from 0.
pub fn reconstruct_pmf(a: &[Float]) -> Vec<Float> {
    let prec = precision::working();
    let mut probs = vec![Float::with_val(prec, 1u32)];
    for am in a {
        let stay = Float::with_val(prec, 1u32 - am);
        let mut next = vec![Float::new(prec); probs.len() + 1];
        for (k, p) in probs.iter().enumerate() {
            next[k] += Float::with_val(prec, p * &stay);
            next[k + 1] += Float::with_val(prec, p * am);
        }
        probs = next;
    }
    probs
}

/// Factor `F` given by ascending rational coefficients.
pub fn extract_bernoulli(pgf: &[Rational]) -> Result<BernoulliDecomposition> {
    extract_bernoulli_with(pgf, &DecompOptions::default())
}

pub fn extract_bernoulli_with(pgf: &[Rational], options: &DecompOptions) -> Result<BernoulliDecomposition> {
    let mut coeffs = pgf.to_vec();
    while coeffs.last().is_some_and(|c| *c == 0) {
        coeffs.pop();
    }
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Err(Error::DegenerateInput("generating function has degree 0".into()));
    }
    if degree > options.max_degree {
        return Err(Error::Resource {
            what: "generating function degree",
            value: degree.to_string(),
            cap: options.max_degree.to_string(),
        });
    }
    if coeffs[degree] < 0 {
        return Err(Error::DegenerateInput("leading coefficient must be positive".into()));
    }

    let zero_roots = coeffs.iter().take_while(|c| **c == 0).count();
    let reduced = IntPoly::from_rationals(&coeffs[zero_roots..]);

    let mut roots: Vec<Float> = vec![Float::new(precision::working()); zero_roots];
    let mut isolated = isolate_negative_roots(&reduced)?;
    isolated.sort_by(|a, b| a.lo.cmp(&b.lo));
    let found: usize = isolated.iter().map(|r| r.multiplicity).sum();
    if found != reduced.degree() {
        return Err(Error::RootValidation(format!(
            "found {found} real negative roots out of {}; the generating function is not real-rooted on (-inf, 0]",
            reduced.degree()
        )));
    }
    let refined: Vec<(Float, usize)> = isolated
        .into_par_iter()
        .map(|iso| (refine(&reduced, iso.clone()), iso.multiplicity))
        .collect();
    for (root, mult) in refined {
        for _ in 0..mult {
            roots.push(root.clone());
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));

    let a: Vec<Float> = roots
        .iter()
        .map(|r| Float::with_val(precision::working(), 1u32 - r).recip())
        .collect();
    let (l3, l4) = match l3_l4(&a) {
        Ok((l3, l4)) => (Some(l3), Some(l4)),
        Err(Error::DegenerateVariance) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(BernoulliDecomposition { degree, roots, a, zero_roots, l3, l4 })
}

/// Full pipeline: generating function, roots, and a reconstruction check
/// against the exact PMF.
pub fn decompose(pmf: &ExactPmf) -> Result<BernoulliDecomposition> {
    decompose_with(pmf, &DecompOptions::default())
}

pub fn decompose_with(pmf: &ExactPmf, options: &DecompOptions) -> Result<BernoulliDecomposition> {
    let decomp = extract_bernoulli_with(&pgf_coefficients(pmf), options)?;
    let gap = reconstruction_gap(&decomp, pmf);
    if !(gap <= options.reconstruction_tol) {
        return Err(Error::RootValidation(format!(
            "reconstructed PMF differs from the exact PMF by {gap:e} (tolerance {:e})",
            options.reconstruction_tol
        )));
    }
    if decomp.zero_roots != pmf.support_min {
        return Err(Error::RootValidation(format!(
            "{} roots at zero but the support starts at {}",
            decomp.zero_roots, pmf.support_min
        )));
    }
    Ok(decomp)
}

/// Largest pointwise difference between the reconstructed and exact PMFs.
pub fn reconstruction_gap(decomp: &BernoulliDecomposition, pmf: &ExactPmf) -> f64 {
    let recon = reconstruct_pmf(&decomp.a);
    let mut gap = 0.0f64;
    for (k, r) in recon.iter().enumerate() {
        let diff = Float::with_val(precision::working(), r - precision::from_rational(&pmf.prob(k)));
        gap = gap.max(diff.abs().to_f64());
    }
    gap
}

/// `m / 2^e`
#[derive(Debug, Clone, PartialEq, Eq)]
struct Dyadic {
    m: Integer,
    e: u32,
}

impl Dyadic {
    fn int(v: i64) -> Self {
        Self { m: Integer::from(v), e: 0 }
    }

    fn with_exp(&self, e: u32) -> Integer {
        debug_assert!(e >= self.e);
        Integer::from(&self.m << (e - self.e))
    }

    fn midpoint(a: &Dyadic, b: &Dyadic) -> Dyadic {
        let e = a.e.max(b.e);
        Dyadic { m: a.with_exp(e) + b.with_exp(e), e: e + 1 }.normalized()
    }

    fn normalized(mut self) -> Self {
        if self.m == 0 {
            self.e = 0;
            return self;
        }
        let tz = self.m.find_one(0).unwrap_or(0).min(self.e);
        self.m >>= tz;
        self.e -= tz;
        self
    }

    #[cfg(test)]
    fn to_rational(&self) -> Rational {
        Rational::from((self.m.clone(), Integer::from(1) << self.e))
    }

    fn to_float(&self) -> Float {
        let prec = precision::working();
        Float::with_val(prec, &self.m) >> self.e
    }

    fn cmp(&self, other: &Dyadic) -> std::cmp::Ordering {
        let e = self.e.max(other.e);
        self.with_exp(e).cmp(&other.with_exp(e))
    }
}

/// Integer polynomial, ascending coefficients.
#[derive(Debug, Clone)]
struct IntPoly(Vec<Integer>);

impl IntPoly {
    fn from_rationals(coeffs: &[Rational]) -> Self {
        let lcm = coeffs.iter().fold(Integer::from(1), |acc, c| acc.lcm(c.denom()));
        IntPoly(
            coeffs
                .iter()
                .map(|c| c.numer() * Integer::from(&lcm / c.denom()))
                .collect(),
        )
    }

    fn degree(&self) -> usize {
        self.0.len() - 1
    }

    /// Sign of `P(x)` for dyadic `x`, exactly.
    fn sign_at(&self, x: &Dyadic) -> i32 {
        let d = self.degree();
        let mut acc = self.0[d].clone();
        for i in (0..d).rev() {
            acc *= &x.m;
            acc += Integer::from(&self.0[i] << (x.e * (d - i) as u32));
        }
        acc.cmp0() as i32
    }

    /// Exact number of roots in the open interval `(lo, hi)`, valid because
    /// the polynomial is real-rooted.
    fn roots_in(&self, lo: &Dyadic, hi: &Dyadic) -> usize {
        let e = lo.e.max(hi.e);
        let a = lo.with_exp(e);
        let b = hi.with_exp(e) - &a;
        let d = self.degree();
        // P1(y) = Σ c_i 2^{e(D-i)} (a + b y)^i, i.e. 2^{eD} P(lo + (hi - lo) y)
        let mut acc: Vec<Integer> = vec![self.0[d].clone()];
        for i in (0..d).rev() {
            let mut next = vec![Integer::new(); acc.len() + 1];
            for (j, c) in acc.iter().enumerate() {
                next[j] += Integer::from(c * &a);
                next[j + 1] += Integer::from(c * &b);
            }
            next[0] += Integer::from(&self.0[i] << (e * (d - i) as u32));
            acc = next;
        }
        // (x + 1)^D P1(1 / (x + 1)): reverse, then Taylor shift by one
        acc.reverse();
        let n = acc.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let (left, right) = acc.split_at_mut(j + 1);
                left[j] += &right[0];
            }
        }
        sign_variations(&acc)
    }
}

fn sign_variations(coeffs: &[Integer]) -> usize {
    let mut last = 0;
    let mut count = 0;
    for c in coeffs {
        let s = c.cmp0() as i32;
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

#[derive(Debug, Clone)]
struct Isolated {
    lo: Dyadic,
    hi: Dyadic,
    multiplicity: usize,
    /// The root sits exactly at `lo` (and `lo == hi`).
    exact: bool,
}

fn width_below(lo: &Dyadic, hi: &Dyadic, bits: u32) -> bool {
    let e = lo.e.max(hi.e);
    let width = hi.with_exp(e) - lo.with_exp(e);
    let mag = Integer::from(lo.m.abs_ref()).max(Integer::from(hi.m.abs_ref()));
    let mag_e = lo.e.max(hi.e);
    // width / 2^e < 2^-bits · max(1, |endpoint|)
    let scaled_width = width << bits;
    let one = Integer::from(1) << e;
    let mag = Integer::from(&mag << (e - mag_e)).max(one);
    scaled_width < mag
}

/// Multiplicity of a root at `x`: how many successive derivatives vanish.
fn multiplicity_at(poly: &IntPoly, x: &Dyadic) -> usize {
    let mut p = poly.clone();
    let mut mult = 0;
    while p.degree() > 0 && p.sign_at(x) == 0 {
        mult += 1;
        p = IntPoly(p.0.iter().enumerate().skip(1).map(|(i, c)| Integer::from(c * i as u64)).collect());
    }
    mult
}

fn isolate_negative_roots(poly: &IntPoly) -> Result<Vec<Isolated>> {
    let d = poly.degree();
    if d == 0 {
        return Ok(Vec::new());
    }
    if poly.0[0] == 0 {
        return Err(Error::RootValidation("zero roots must be removed before isolation".into()));
    }
    // Cauchy bound 1 + max |c_i / c_D|, rounded up to a power of two
    let lead = Integer::from(poly.0[d].abs_ref());
    let max_ratio = poly.0[..d]
        .iter()
        .map(|c| Rational::from((Integer::from(c.abs_ref()), lead.clone())))
        .max()
        .unwrap_or_default();
    let bound = max_ratio + 1u32;
    let mut e = 0u32;
    while (Integer::from(1) << e) <= bound {
        e += 1;
    }
    let lo = Dyadic { m: -(Integer::from(1) << e), e: 0 };
    let hi = Dyadic::int(0);

    let mut out = Vec::new();
    let mut stack = vec![(lo, hi)];
    while let Some((lo, hi)) = stack.pop() {
        let count = poly.roots_in(&lo, &hi);
        match count {
            0 => {}
            1 => out.push(Isolated { lo, hi, multiplicity: 1, exact: false }),
            _ if width_below(&lo, &hi, CLUSTER_BITS) => {
                out.push(Isolated { lo, hi, multiplicity: count, exact: false });
            }
            _ => {
                let mid = Dyadic::midpoint(&lo, &hi);
                if poly.sign_at(&mid) == 0 {
                    let mult = multiplicity_at(poly, &mid);
                    out.push(Isolated { lo: mid.clone(), hi: mid.clone(), multiplicity: mult, exact: true });
                }
                stack.push((lo, mid.clone()));
                stack.push((mid, hi));
            }
        }
    }
    Ok(out)
}

fn refine(poly: &IntPoly, mut iso: Isolated) -> Float {
    if iso.exact {
        return iso.lo.to_float();
    }
    if iso.multiplicity > 1 {
        return Dyadic::midpoint(&iso.lo, &iso.hi).to_float();
    }
    // make both endpoints non-roots so the sign change brackets the root
    while poly.sign_at(&iso.lo) == 0 || poly.sign_at(&iso.hi) == 0 {
        let mid = Dyadic::midpoint(&iso.lo, &iso.hi);
        if poly.sign_at(&mid) == 0 {
            return mid.to_float();
        }
        if poly.roots_in(&iso.lo, &mid) == 1 {
            iso.hi = mid;
        } else {
            iso.lo = mid;
        }
    }
    let sign_lo = poly.sign_at(&iso.lo);
    while !width_below(&iso.lo, &iso.hi, REFINE_BITS) {
        let mid = Dyadic::midpoint(&iso.lo, &iso.hi);
        let s = poly.sign_at(&mid);
        if s == 0 {
            return mid.to_float();
        }
        if s == sign_lo {
            iso.lo = mid;
        } else {
            iso.hi = mid;
        }
    }
    Dyadic::midpoint(&iso.lo, &iso.hi).to_float()
}
