//! Moments of the standardized kernel and of the standardized Bernoulli
//! variables, and the coefficients of the expansion built from them.
//!
//! With independent `u_l ~ Bernoulli(p_l)` the kernel is
//!
//! ```text
//! g(u) = 1{u_1 + … + u_s = 0} - Q_s + Q_s Σ_l (u_l - p_l) / q_l
//!      = 1{L = 0} - Q_s (1 + Σ r_l) + Q_s L,     L = Σ_l u_l / q_l.
//! ```
//!
//! Since `1{L = 0} · L = 0`, every moment of `g`, conditional on any subset
//! of the `u_l`, reduces to moments of a shifted weighted Bernoulli sum.
//! All of these are exact rationals; σ-powers and `√(p q)` are applied last.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Complex, Float, Rational};
use serde::{Deserialize, Serialize};

use crate::precision;
use crate::scheme::DerivedParams;
use crate::Result;

/// Largest `s` for which absolute moments are summed exactly over the
/// `≤ 2^s` atoms of `L`.
pub const ABS_ENUMERATION_MAX_SETS: usize = 20;
const ABS_MC_SAMPLES: usize = 400_000;
const ABS_MC_SEED: u64 = 0x6a09_e667_f3bc_c908;

/// Moments of `ξ̃_l = (u_l - p_l) / √(p_l q_l)`.
#[derive(Debug, Clone)]
pub struct XiMoments {
    /// `E ξ̃³ = (q - p) / √(p q)`
    pub third: Vec<Float>,
    /// `E ξ̃⁴ = (1 - 3 p q) / (p q)`
    pub fourth: Vec<Rational>,
    /// `E |ξ̃|⁵ = (p⁴ + q⁴) (p q)^{-3/2}`
    pub abs_fifth: Vec<Float>,
}

pub fn xi_moments(derived: &DerivedParams) -> XiMoments {
    let prec = precision::working();
    let mut out = XiMoments { third: vec![], fourth: vec![], abs_fifth: vec![] };
    for (p, q) in derived.p.iter().zip(&derived.q) {
        let pq = Rational::from(p * q);
        let root_pq = precision::sqrt_rational(&pq);
        out.third.push(precision::from_rational(&Rational::from(q - p)) / &root_pq);
        out.fourth.push(Rational::from(1 - Rational::from(&pq * 3u32)) / &pq);
        let fourth_powers = Rational::from(p.square_ref()).square() + Rational::from(q.square_ref()).square();
        let pq_pow = precision::from_rational(&pq).pow(Float::with_val(prec, -1.5));
        out.abs_fifth.push(precision::from_rational(&fourth_powers) * pq_pow);
    }
    out
}

/// Exact moments of the un-standardized kernel `g` against the centred
/// Bernoulli variables `x_l = u_l - p_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGMoments {
    /// `E g^j` for `j = 0..=4`
    pub power: [Rational; 5],
    /// `E g x_l`
    pub g_x: Vec<Rational>,
    /// `E g x_l²`
    pub g_x2: Vec<Rational>,
    /// `E g² x_l`
    pub g2_x: Vec<Rational>,
    /// `E g² x_l²`
    pub g2_x2: Vec<Rational>,
    /// `E g x_l x_m` (diagonal left at zero)
    pub g_x_x: Vec<Vec<Rational>>,
}

/// Absolute moments `E|g̃|`, `E|g̃|³`, `E|g̃|⁵`.
#[derive(Debug, Clone)]
pub struct AbsGMoments {
    pub e1: Float,
    pub e3: Float,
    pub e5: Float,
    /// Exact `E|g|^j` for `j = 1, 3, 5` (before standardization), when
    /// obtained by enumeration.
    pub exact_raw: Option<[Rational; 3]>,
    /// Standard errors of `e1, e3, e5` when estimated by Monte Carlo.
    pub std_error: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct GMoments {
    pub raw: RawGMoments,
    /// `E g̃² = E g² / σ²`, exactly one.
    pub eg2: Rational,
    /// `E g̃³`
    pub eg3: Float,
    /// `E g̃⁴`
    pub eg4: Rational,
    /// `E g̃² ξ̃_l`
    pub g2_xi: Vec<Float>,
    /// `E g̃² ξ̃_l²`
    pub g2_xi2: Vec<Rational>,
    /// `E g̃ ξ̃_l ξ̃_m`
    pub g_xi_xi: Vec<Vec<Float>>,
    pub abs: Option<AbsGMoments>,
}

/// `g` written through the weighted Bernoulli sum `L`.
struct KernelRep<'a> {
    derived: &'a DerivedParams,
    /// `c = -Q_s (1 + Σ r_l)`
    c: Rational,
    /// `1 / q_l`
    w: Vec<Rational>,
}

impl<'a> KernelRep<'a> {
    fn new(derived: &'a DerivedParams) -> Self {
        let r_sum = derived.r.iter().fold(Rational::new(), |acc, r| acc + r);
        let c = -Rational::from(&derived.q_s * (1 + r_sum));
        let w = derived.q.iter().map(|q| Rational::from(q.recip_ref())).collect();
        Self { derived, c, w }
    }

    /// `E (shift + Q_s Σ_{l ∉ fixed} w_l u_l)^j` for `j = 0..=ORDER`.
    fn shifted_moments(&self, excluded: &[usize], shift: &Rational) -> [Rational; 5] {
        let q_s = &self.derived.q_s;
        let mut m: [Rational; 5] = [Rational::from(1), Rational::new(), Rational::new(), Rational::new(), Rational::new()];
        for l in (0..self.w.len()).filter(|l| !excluded.contains(l)) {
            let step = Rational::from(q_s * &self.w[l]);
            let p = &self.derived.p[l];
            let mut step_pow = [Rational::from(1), step.clone(), Rational::new(), Rational::new(), Rational::new()];
            for i in 2..5 {
                step_pow[i] = Rational::from(&step_pow[i - 1] * &step);
            }
            let mut next = m.clone();
            for j in 1..5 {
                for i in 1..=j {
                    let term = Rational::from(&m[j - i] * &step_pow[i]) * p * binom(j, i);
                    next[j] += term;
                }
            }
            m = next;
        }
        let mut shift_pow = [Rational::from(1), shift.clone(), Rational::new(), Rational::new(), Rational::new()];
        for i in 2..5 {
            shift_pow[i] = Rational::from(&shift_pow[i - 1] * shift);
        }
        let mut out: [Rational; 5] = Default::default();
        for j in 0..5 {
            for i in 0..=j {
                out[j] += Rational::from(&shift_pow[j - i] * &m[i]) * binom(j, i);
            }
        }
        out
    }

    /// `E[g^j | u_l = v for (l, v) in fixed]`, `j = 0..=4`.
    fn conditional(&self, fixed: &[(usize, bool)]) -> [Rational; 5] {
        let excluded: Vec<usize> = fixed.iter().map(|&(l, _)| l).collect();
        if fixed.iter().any(|&(_, v)| v) {
            // L > 0, the indicator is off
            let mut shift = self.c.clone();
            for &(l, v) in fixed {
                if v {
                    shift += Rational::from(&self.derived.q_s * &self.w[l]);
                }
            }
            return self.shifted_moments(&excluded, &shift);
        }
        let p_zero = (0..self.w.len())
            .filter(|l| !excluded.contains(l))
            .fold(Rational::from(1), |acc, l| acc * &self.derived.q[l]);
        let free = self.shifted_moments(&excluded, &self.c);
        let one_plus_c = Rational::from(1 + &self.c);
        let mut out = free;
        let mut a = Rational::from(1);
        let mut b = Rational::from(1);
        for o in out.iter_mut() {
            *o += Rational::from(&p_zero * &a) - Rational::from(&p_zero * &b);
            a *= &one_plus_c;
            b *= &self.c;
        }
        out
    }

    fn bernoulli_weights(&self, l: usize) -> [(bool, Rational, Rational); 2] {
        let p = &self.derived.p[l];
        let q = &self.derived.q[l];
        [(false, q.clone(), -p.clone()), (true, p.clone(), q.clone())]
    }

    fn raw(&self) -> RawGMoments {
        let s = self.w.len();
        let power = self.conditional(&[]);
        let mut raw = RawGMoments {
            power,
            g_x: vec![Rational::new(); s],
            g_x2: vec![Rational::new(); s],
            g2_x: vec![Rational::new(); s],
            g2_x2: vec![Rational::new(); s],
            g_x_x: vec![vec![Rational::new(); s]; s],
        };
        for l in 0..s {
            for (v, prob, x) in self.bernoulli_weights(l) {
                let cond = self.conditional(&[(l, v)]);
                let px = Rational::from(&prob * &x);
                let px2 = Rational::from(&px * &x);
                raw.g_x[l] += Rational::from(&px * &cond[1]);
                raw.g_x2[l] += Rational::from(&px2 * &cond[1]);
                raw.g2_x[l] += Rational::from(&px * &cond[2]);
                raw.g2_x2[l] += Rational::from(&px2 * &cond[2]);
            }
        }
        for l in 0..s {
            for m in (l + 1)..s {
                let mut acc = Rational::new();
                for (vl, pl, xl) in self.bernoulli_weights(l) {
                    for (vm, pm, xm) in self.bernoulli_weights(m) {
                        let cond = self.conditional(&[(l, vl), (m, vm)]);
                        acc += Rational::from(&pl * &pm) * &xl * &xm * &cond[1];
                    }
                }
                raw.g_x_x[l][m] = acc.clone();
                raw.g_x_x[m][l] = acc;
            }
        }
        raw
    }

    /// Value of `g` at an atom of `L`.
    fn value_at(&self, l_value: &Rational) -> Rational {
        if *l_value == 0 {
            Rational::from(1 + &self.c)
        } else {
            Rational::from(&self.derived.q_s * l_value) + &self.c
        }
    }
}

fn binom(n: usize, k: usize) -> u32 {
    const ROWS: [[u32; 5]; 5] = [[1, 0, 0, 0, 0], [1, 1, 0, 0, 0], [1, 2, 1, 0, 0], [1, 3, 3, 1, 0], [1, 4, 6, 4, 1]];
    ROWS[n][k]
}

/// Un-standardized moments of `g`; defined even when `σ² = 0`.
pub fn g_raw_moments(derived: &DerivedParams) -> RawGMoments {
    KernelRep::new(derived).raw()
}

/// Signed moments of `g̃`, with cross moments against the `ξ̃_l`.
pub fn g_signed_moments(derived: &DerivedParams) -> Result<GMoments> {
    derived.require_sigma()?;
    let rep = KernelRep::new(derived);
    let raw = rep.raw();

    let sigma2 = &derived.sigma2;
    let sigma = derived.sigma();
    let sigma3 = Float::with_val(precision::working(), &sigma * precision::from_rational(sigma2));
    let pq: Vec<Rational> = derived.p.iter().zip(&derived.q).map(|(p, q)| Rational::from(p * q)).collect();
    let root_pq: Vec<Float> = pq.iter().map(precision::sqrt_rational).collect();

    let eg2 = Rational::from(&raw.power[2] / sigma2);
    let eg3 = precision::from_rational(&raw.power[3]) / &sigma3;
    let eg4 = Rational::from(&raw.power[4] / Rational::from(sigma2.square_ref()));
    let g2_xi = raw
        .g2_x
        .iter()
        .zip(&root_pq)
        .map(|(m, rpq)| precision::from_rational(&Rational::from(m / sigma2)) / rpq)
        .collect();
    let g2_xi2 = raw
        .g2_x2
        .iter()
        .zip(&pq)
        .map(|(m, pq)| Rational::from(m / sigma2) / pq)
        .collect();
    let s = derived.num_sets();
    let mut g_xi_xi = vec![vec![Float::new(precision::working()); s]; s];
    for l in 0..s {
        for m in 0..s {
            if l != m {
                let denom = Float::with_val(precision::working(), &root_pq[l] * &root_pq[m]) * &sigma;
                g_xi_xi[l][m] = precision::from_rational(&raw.g_x_x[l][m]) / denom;
            }
        }
    }
    Ok(GMoments { raw, eg2, eg3, eg4, g2_xi, g2_xi2, g_xi_xi, abs: None })
}

/// Exact distribution of `L = Σ u_l / q_l` as merged atoms.
fn l_distribution(derived: &DerivedParams, w: &[Rational]) -> BTreeMap<Rational, Rational> {
    let mut atoms = BTreeMap::new();
    atoms.insert(Rational::new(), Rational::from(1));
    for (l, wl) in w.iter().enumerate() {
        let mut next = BTreeMap::new();
        for (value, prob) in &atoms {
            *next.entry(value.clone()).or_insert_with(Rational::new) += Rational::from(prob * &derived.q[l]);
            *next.entry(Rational::from(value + wl)).or_insert_with(Rational::new) +=
                Rational::from(prob * &derived.p[l]);
        }
        atoms = next;
    }
    atoms
}

/// `E|g̃|`, `E|g̃|³`, `E|g̃|⁵`: exact over the atoms of `L` for
/// `s <= 20`, Monte Carlo above that.
pub fn g_abs_moments(derived: &DerivedParams) -> Result<AbsGMoments> {
    derived.require_sigma()?;
    let prec = precision::working();
    let rep = KernelRep::new(derived);
    let sigma = derived.sigma();

    if derived.num_sets() <= ABS_ENUMERATION_MAX_SETS {
        let mut sums = [Rational::new(), Rational::new(), Rational::new()];
        for (value, prob) in l_distribution(derived, &rep.w) {
            let g = rep.value_at(&value).abs();
            let g2 = Rational::from(g.square_ref());
            let mut pow = Rational::from(&g * &prob);
            sums[0] += &pow;
            pow *= &g2;
            sums[1] += &pow;
            pow *= &g2;
            sums[2] += &pow;
        }
        let standardize = |r: &Rational, j: i32| precision::from_rational(r) / Float::with_val(prec, (&sigma).pow(j));
        return Ok(AbsGMoments {
            e1: standardize(&sums[0], 1),
            e3: standardize(&sums[1], 3),
            e5: standardize(&sums[2], 5),
            exact_raw: Some(sums),
            std_error: None,
        });
    }

    let p: Vec<f64> = derived.p.iter().map(Rational::to_f64).collect();
    let w: Vec<f64> = rep.w.iter().map(Rational::to_f64).collect();
    let c = rep.c.to_f64();
    let q_s = derived.q_s.to_f64();
    let sigma_f = sigma.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(ABS_MC_SEED);
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for _ in 0..ABS_MC_SAMPLES {
        let mut l_value = 0.0;
        for (pl, wl) in p.iter().zip(&w) {
            if rng.gen::<f64>() < *pl {
                l_value += wl;
            }
        }
        let g = if l_value == 0.0 { 1.0 + c } else { c + q_s * l_value };
        let a = (g / sigma_f).abs();
        for (i, e) in [1, 3, 5].into_iter().enumerate() {
            let v = a.powi(e);
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = ABS_MC_SAMPLES as f64;
    let mean = sum.map(|v| v / n);
    let mut std_error = [0.0; 3];
    for i in 0..3 {
        let var = (sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0);
        std_error[i] = (var / n).sqrt();
    }
    Ok(AbsGMoments {
        e1: Float::with_val(prec, mean[0]),
        e3: Float::with_val(prec, mean[1]),
        e5: Float::with_val(prec, mean[2]),
        exact_raw: None,
        std_error: Some(std_error),
    })
}

/// Signed and absolute moments together.
pub fn g_moments(derived: &DerivedParams) -> Result<GMoments> {
    let mut gmom = g_signed_moments(derived)?;
    gmom.abs = Some(g_abs_moments(derived)?);
    Ok(gmom)
}

/// How the `(it)²` coefficient `M₂` is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum M2Form {
    /// `Σ_l (E g̃²ξ̃_l E ξ̃_l³ - E g̃²ξ̃_l² + 1) + Σ_{l≠m} (E g̃ ξ̃_l ξ̃_m)²`.
    #[default]
    WithCrossTerms,
    /// The per-set sum alone. It vanishes identically for every scheme.
    PerSetOnly,
}

/// Placement of the `-3` in `M₄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum M4Form {
    /// `E g̃⁴ - 3 Σ_l (E g̃² ξ̃_l)² - 3`
    #[default]
    Bracketed,
    /// `E g̃⁴ - 3 Σ_l ((E g̃² ξ̃_l)² + 1)`
    PerSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoeffOptions {
    pub m2: M2Form,
    pub m4: M4Form,
}

/// `M₂`, `M₃`, `M₄` of the expansion; `M₂`, `M₃²` and `M₄` are rational.
#[derive(Debug, Clone)]
pub struct EdgeworthCoeffs {
    pub m2: Float,
    pub m3: Float,
    pub m4: Float,
    pub m2_exact: Rational,
    pub m3_squared: Rational,
    pub m4_exact: Rational,
    /// The per-set part of `M₂` on its own, always zero.
    pub m2_per_set: Rational,
    pub options: CoeffOptions,
}

impl EdgeworthCoeffs {
    /// Coefficients given directly, e.g. for synthetic checks.
    pub fn from_values(m2: f64, m3: f64, m4: f64) -> Self {
        let prec = precision::working();
        let m3_f = Float::with_val(prec, m3);
        let m3_squared = Rational::from_f64(m3).unwrap_or_default().square();
        Self {
            m2: Float::with_val(prec, m2),
            m3: m3_f,
            m4: Float::with_val(prec, m4),
            m2_exact: Rational::from_f64(m2).unwrap_or_default(),
            m3_squared,
            m4_exact: Rational::from_f64(m4).unwrap_or_default(),
            m2_per_set: Rational::new(),
            options: CoeffOptions::default(),
        }
    }
}

pub fn edgeworth_coeffs(derived: &DerivedParams, gmom: &GMoments, options: CoeffOptions) -> Result<EdgeworthCoeffs> {
    derived.require_sigma()?;
    let raw = &gmom.raw;
    let sigma2 = &derived.sigma2;
    let sigma4 = Rational::from(sigma2.square_ref());
    let s = derived.num_sets();

    let mut per_set = Rational::new();
    let mut cross = Rational::new();
    let mut sq_g2_xi = Rational::new();
    for l in 0..s {
        let (p, q) = (&derived.p[l], &derived.q[l]);
        let pq = Rational::from(p * q);
        // E g̃²ξ̃ · E ξ̃³ = E g² x (q - p) / (σ² p q)
        let skew_part = Rational::from(&raw.g2_x[l] * Rational::from(q - p)) / Rational::from(sigma2 * &pq);
        per_set += skew_part - &gmom.g2_xi2[l] + 1u32;
        sq_g2_xi += Rational::from(raw.g2_x[l].square_ref()) / Rational::from(&sigma4 * &pq);
        for m in 0..s {
            if m != l {
                let pq_m = Rational::from(&derived.p[m] * &derived.q[m]);
                let denom = Rational::from(sigma2 * &pq) * pq_m;
                cross += Rational::from(raw.g_x_x[l][m].square_ref()) / denom;
            }
        }
    }
    let m2_exact = match options.m2 {
        M2Form::WithCrossTerms => Rational::from(&per_set + &cross),
        M2Form::PerSetOnly => per_set.clone(),
    };
    let three_sum = Rational::from(&sq_g2_xi * 3u32);
    let m4_exact = match options.m4 {
        M4Form::Bracketed => Rational::from(&gmom.eg4 - &three_sum) - 3u32,
        M4Form::PerSet => Rational::from(&gmom.eg4 - &three_sum) - Rational::from(3 * s as u64),
    };
    let m3_squared = Rational::from(raw.power[3].square_ref()) / Rational::from(&sigma4 * sigma2);
    Ok(EdgeworthCoeffs {
        m2: precision::from_rational(&m2_exact),
        m3: gmom.eg3.clone(),
        m4: precision::from_rational(&m4_exact),
        m2_exact,
        m3_squared,
        m4_exact,
        m2_per_set: per_set,
        options,
    })
}

/// `W_N(t) = e^{-t²/2} (1 + G₁(t)/√N + (G₂(t) - G₂(0))/N)`.
pub fn w_charfun(t: f64, coeffs: &EdgeworthCoeffs, n: usize) -> Complex {
    let prec = precision::working();
    let t = Float::with_val(prec, t);
    let t2 = Float::with_val(prec, t.square_ref());
    let t3 = Float::with_val(prec, &t2 * &t);
    let t4 = Float::with_val(prec, t2.square_ref());
    let t6 = Float::with_val(prec, &t4 * &t2);
    let n_f = Float::with_val(prec, n as u64);
    let sqrt_n = Float::with_val(prec, n_f.sqrt_ref());

    // (it)³ = -i t³, (it)⁴ = t⁴, (it)⁶ = -t⁶, (it)² = -t²
    let imag = -(t3 * &coeffs.m3) / 6u32 / &sqrt_n;
    let m3_sq = precision::from_rational(&coeffs.m3_squared);
    let second = -(t6 * m3_sq) / 72u32 + t4 * &coeffs.m4 / 24u32 - Float::with_val(prec, &t2 * &coeffs.m2) / 4u32;
    let real = 1u32 + second / &n_f;
    let gauss = Float::with_val(prec, -t2 / 2u32).exp();
    Complex::with_val(prec, (real * &gauss, imag * gauss))
}

impl GMoments {
    /// Standardized first moment `E g̃`, exactly zero.
    pub fn eg1(&self) -> Rational {
        self.raw.power[1].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use crate::scheme::{derive, SchemeParams};

    fn rat(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    fn derived(n: usize, sets: &[usize]) -> DerivedParams {
        derive(&SchemeParams::new(n, sets.to_vec()).unwrap())
    }

    /// Brute force over the 2^s outcomes of (u_1, …, u_s), straight from
    /// the definition of g.
    fn brute(d: &DerivedParams) -> RawGMoments {
        let s = d.num_sets();
        let mut out = RawGMoments {
            power: Default::default(),
            g_x: vec![Rational::new(); s],
            g_x2: vec![Rational::new(); s],
            g2_x: vec![Rational::new(); s],
            g2_x2: vec![Rational::new(); s],
            g_x_x: vec![vec![Rational::new(); s]; s],
        };
        for mask in 0u32..(1 << s) {
            let u: Vec<bool> = (0..s).map(|l| mask & (1 << l) != 0).collect();
            let mut prob = Rational::from(1);
            let mut g = Rational::from(if mask == 0 { 1 } else { 0 }) - &d.q_s;
            let x: Vec<Rational> = (0..s)
                .map(|l| Rational::from(if u[l] { 1 } else { 0 }) - &d.p[l])
                .collect();
            for l in 0..s {
                prob *= if u[l] { &d.p[l] } else { &d.q[l] };
                g += Rational::from(&d.q_s / &d.q[l]) * &x[l];
            }
            let g2 = Rational::from(g.square_ref());
            let mut pow = Rational::from(1);
            for j in 0..5 {
                out.power[j] += Rational::from(&prob * &pow);
                pow *= &g;
            }
            for l in 0..s {
                let x2 = Rational::from(x[l].square_ref());
                out.g_x[l] += Rational::from(&prob * &g) * &x[l];
                out.g_x2[l] += Rational::from(&prob * &g) * &x2;
                out.g2_x[l] += Rational::from(&prob * &g2) * &x[l];
                out.g2_x2[l] += Rational::from(&prob * &g2) * &x2;
                for m in 0..s {
                    if m != l {
                        out.g_x_x[l][m] += Rational::from(&prob * &g) * &x[l] * &x[m];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for (n, sets) in [(3, vec![1, 1]), (7, vec![2, 3]), (10, vec![3, 5, 2]), (9, vec![1, 4, 4]), (6, vec![1, 2, 3])] {
            let d = derived(n, &sets);
            let rep = KernelRep::new(&d);
            assert_eq!(rep.raw(), brute(&d), "N={n} {sets:?}");
        }
    }

    #[test]
    fn orthogonality_and_unit_variance() {
        for (n, sets) in [(3, vec![1, 1]), (13, vec![2, 3, 7]), (20, vec![5, 7, 3, 11])] {
            let d = derived(n, &sets);
            let g = g_signed_moments(&d).unwrap();
            assert_eq!(g.raw.power[1], 0);
            assert!(g.raw.g_x.iter().all(|v| *v == 0));
            assert!(g.raw.g_x2.iter().all(|v| *v == 0));
            assert_eq!(g.eg2, 1);
            assert_eq!(g.raw.power[2], d.sigma2);
        }
    }

    #[test]
    fn three_cells_two_singletons() {
        let d = derived(3, &[1, 1]);
        let g = g_moments(&d).unwrap();
        assert!((g.eg3.to_f64() - 0.5).abs() < 1e-40);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.g2_xi[0].to_f64() - inv_sqrt2).abs() < 1e-15);
        let abs = g.abs.unwrap();
        // σ = 2/9 is rational here, so the standardized values are too
        let sigma = rat(2, 9);
        let [e1, e3, e5] = abs.exact_raw.unwrap();
        assert_eq!(e3 / Rational::from((&sigma).pow(3u32)), rat(25, 18));
        assert_eq!(e5 / Rational::from((&sigma).pow(5u32)), rat(289, 72));
        assert_eq!(e1 / sigma, rat(8, 9));
        assert!((abs.e3.to_f64() - 25.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn absolute_moment_inequalities() {
        for (n, sets) in [(3, vec![1, 1]), (30, vec![9, 15]), (12, vec![1, 2, 3, 4])] {
            let abs = g_abs_moments(&derived(n, &sets)).unwrap();
            assert!(abs.e1.to_f64() <= 1.0 + 1e-30);
            assert!(abs.e3.to_f64() >= 1.0 - 1e-30);
        }
    }

    #[test]
    fn monte_carlo_fallback_is_close() {
        let sets: Vec<usize> = (0..22).map(|i| 1 + i % 3).collect();
        let d = derived(60, &sets);
        let abs = g_abs_moments(&d).unwrap();
        let se = abs.std_error.unwrap();
        assert!(abs.exact_raw.is_none());
        assert!(se.iter().all(|s| *s > 0.0));
        assert!(abs.e1.to_f64() <= 1.0 + 4.0 * se[0]);
    }

    #[test]
    fn xi() {
        let d = derived(6, &[3, 2]);
        let x = xi_moments(&d);
        assert_eq!(x.third[0].to_f64(), 0.0);
        assert_eq!(x.fourth[1], rat(3, 2));
        let expected = (17.0 / 81.0) * 27.0 / (2.0 * 2f64.sqrt());
        assert!((x.abs_fifth[1].to_f64() - expected).abs() < 1e-13);
        for f in &x.fourth {
            assert!(*f >= 1);
        }
    }

    #[test]
    fn xi_fifth_moment_matches_two_point_law() {
        let d = derived(11, &[2, 7, 4]);
        let x = xi_moments(&d);
        for l in 0..3 {
            let p = d.p[l].to_f64();
            let q = 1.0 - p;
            let s = (p * q).sqrt();
            let direct = p * (q / s).powi(5) + q * (p / s).powi(5);
            assert!((x.abs_fifth[l].to_f64() - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn coefficients_three_cells() {
        let d = derived(3, &[1, 1]);
        let g = g_signed_moments(&d).unwrap();
        let c = edgeworth_coeffs(&d, &g, CoeffOptions::default()).unwrap();
        assert!((c.m3.to_f64() - 0.5).abs() < 1e-40);
        assert_eq!(c.m3_squared, rat(1, 4));
        // (E g̃²ξ̃₁)² = 1/2 for each set
        let sq = Rational::from(g.raw.g2_x[0].square_ref()) / Rational::from(d.sigma2.square_ref()) / rat(2, 9);
        assert_eq!(sq, rat(1, 2));
    }

    #[test]
    fn per_set_m2_vanishes_identically() {
        for (n, sets) in [(3, vec![1, 1]), (8, vec![4, 4]), (17, vec![2, 9, 5]), (40, vec![12, 20, 7, 30])] {
            let d = derived(n, &sets);
            let g = g_signed_moments(&d).unwrap();
            let c = edgeworth_coeffs(&d, &g, CoeffOptions::default()).unwrap();
            assert_eq!(c.m2_per_set, 0, "N={n} {sets:?}");
            let alt = CoeffOptions { m2: M2Form::PerSetOnly, ..Default::default() };
            assert_eq!(edgeworth_coeffs(&d, &g, alt).unwrap().m2_exact, 0);
        }
    }

    #[test]
    fn symmetric_sets_m2_float_route() {
        // p = 1/2 kills E ξ̃³; the per-set part is Σ (1 - E g̃²ξ̃²)
        let d = derived(4, &[2, 2]);
        let g = g_signed_moments(&d).unwrap();
        let x = xi_moments(&d);
        let c = edgeworth_coeffs(&d, &g, CoeffOptions::default()).unwrap();
        let mut float_route = 0.0;
        for l in 0..2 {
            assert_eq!(x.third[l].to_f64(), 0.0);
            float_route += 1.0 - g.g2_xi2[l].to_f64();
        }
        assert!((c.m2_per_set.to_f64() - float_route).abs() < 1e-15);
    }

    #[test]
    fn m2_tracks_variance_correction() {
        // (it)² M₂ / (4N) must reproduce the (it)² b_N / 2 of the exact variance.
        let d = derived(640, &[192, 320]);
        let g = g_signed_moments(&d).unwrap();
        let c = edgeworth_coeffs(&d, &g, CoeffOptions::default()).unwrap();
        let two_n_b = d.b_n_tilde().unwrap().to_f64() * 2.0;
        assert!((c.m2.to_f64() - two_n_b).abs() < 0.01, "{} vs {}", c.m2.to_f64(), two_n_b);
    }

    #[test]
    fn m4_forms_differ_by_three_s_minus_one() {
        let d = derived(12, &[3, 4, 5]);
        let g = g_signed_moments(&d).unwrap();
        let a = edgeworth_coeffs(&d, &g, CoeffOptions::default()).unwrap();
        let b = edgeworth_coeffs(&d, &g, CoeffOptions { m4: M4Form::PerSet, ..Default::default() }).unwrap();
        assert_eq!(a.m4_exact - b.m4_exact, 6);
    }

    #[test]
    fn w_at_zero_and_large_n() {
        let c = EdgeworthCoeffs::from_values(0.7, 0.4, -1.1);
        let w = w_charfun(0.0, &c, 50);
        assert_eq!(w.real().to_f64(), 1.0);
        assert_eq!(w.imag().to_f64(), 0.0);
        let w = w_charfun(1.3, &c, 1_000_000_000);
        assert!((w.real().to_f64() - (-1.3f64 * 1.3 / 2.0).exp()).abs() < 1e-8);
    }

    #[test]
    fn w_substitution() {
        let c = EdgeworthCoeffs::from_values(0.0, 0.5, 0.0);
        let w = w_charfun(1.0, &c, 100);
        let g = (-0.5f64).exp();
        // (it)³ M₃ / (6√N) = -i/120 and (it)⁶ M₃² / (72 N) = -1/28800
        assert!((w.imag().to_f64() + g / 120.0).abs() < 1e-16);
        assert!((w.real().to_f64() - g * (1.0 - 1.0 / 28800.0)).abs() < 1e-16);
    }

    #[test]
    fn degenerate_sigma() {
        let d = derived(5, &[3]);
        assert!(matches!(g_signed_moments(&d), Err(Error::DegenerateSigma(_))));
        assert!(matches!(g_abs_moments(&d), Err(Error::DegenerateSigma(_))));
    }
}
