//! Local approximations to `P{μ₀ = k}` and their errors against the exact
//! PMF.
//!
//! Termwise inversion maps `(it)^ν e^{-t²/2}` to `H_ν(x) φ(x)`, so
//!
//! ```text
//! Ŵ_N(x) = φ(x) [1 + H₃(x) M₃ / (6√N) + (H₆(x) M₃²/72 + H₄(x) M₄/24 + H₂(x) M₂/4) / N].
//! ```

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::bernoulli::BernoulliDecomposition;
use crate::exact::{self, ExactPmf};
use crate::moments::{self, CoeffOptions, EdgeworthCoeffs};
use crate::precision;
use crate::scheme::{self, DerivedParams, SchemeParams};
use crate::{Error, Result};

/// Probabilists' Hermite polynomial `H_ν(x)` for `ν ∈ {2, 3, 4, 6}`, by the
/// recurrence `H_{n+1} = x H_n - n H_{n-1}`.
pub fn hermite(order: u32, x: &Float) -> Result<Float> {
    if !matches!(order, 2 | 3 | 4 | 6) {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(hermite_any(order, x))
}

pub(crate) fn hermite_any(order: u32, x: &Float) -> Float {
    let prec = x.prec().max(precision::working());
    let mut prev = Float::with_val(prec, 1u32);
    if order == 0 {
        return prev;
    }
    let mut cur = Float::with_val(prec, x);
    for n in 1..order {
        let next = Float::with_val(prec, x * &cur) - Float::with_val(prec, &prev * n);
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficient of `H₄ M₄` inside the `1/N` bracket of `Ŵ_N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H4Weight {
    /// `1/24`, the Fourier inverse of the `(it)⁴ M₄ / 24` term of `W_N`.
    #[default]
    Fourier,
    /// `1/32`, i.e. `(1/(4N)) · (1/8)`.
    ThirtySecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub coeffs: CoeffOptions,
    pub h4: H4Weight,
}

/// `Ŵ_N(x)`.
pub fn w_hat(x: &Float, coeffs: &EdgeworthCoeffs, n: usize) -> Float {
    w_hat_with(x, coeffs, n, H4Weight::Fourier)
}

pub fn w_hat_with(x: &Float, coeffs: &EdgeworthCoeffs, n: usize, h4: H4Weight) -> Float {
    let prec = precision::working();
    let n_f = Float::with_val(prec, n as u64);
    let sqrt_n = Float::with_val(prec, n_f.sqrt_ref());
    let h2 = hermite_any(2, x);
    let h3 = hermite_any(3, x);
    let h4v = hermite_any(4, x);
    let h6 = hermite_any(6, x);
    let m3_sq = precision::from_rational(&coeffs.m3_squared);

    let first = Float::with_val(prec, h3 * &coeffs.m3) / 6u32 / &sqrt_n;
    let h4_term = Float::with_val(prec, h4v * &coeffs.m4);
    let h4_term = match h4 {
        H4Weight::Fourier => h4_term / 24u32,
        H4Weight::ThirtySecond => h4_term / 32u32,
    };
    let second = Float::with_val(prec, h6 * m3_sq) / 72u32 + h4_term + Float::with_val(prec, h2 * &coeffs.m2) / 4u32;
    let bracket = 1u32 + first + second / n_f;
    precision::normal_density(x) * bracket
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// `Ŵ_N(x_k)` against `√N σ P{μ₀=k}`.
    Thm2,
    /// Bernoulli-decomposition expansion at `u_k`.
    Thm3,
    /// `Ŵ_N(u_k)` plus the variance correction, against `√Var μ₀ P{μ₀=k}`.
    Thm4,
    /// `φ(x_k)` against `√N σ P{μ₀=k}`.
    Gaussian,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Thm2 => "thm2",
            Method::Thm3 => "thm3",
            Method::Thm4 => "thm4",
            Method::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thm2" => Ok(Method::Thm2),
            "thm3" => Ok(Method::Thm3),
            "thm4" => Ok(Method::Thm4),
            "gaussian" => Ok(Method::Gaussian),
            other => Err(Error::Domain(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxRow {
    pub k: usize,
    /// `x_k` or `u_k`
    pub coord: f64,
    pub approx: f64,
    /// `scale · P{μ₀ = k}`
    pub exact: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxReport {
    pub method: Method,
    pub rows: Vec<ApproxRow>,
    pub sup_error: f64,
    /// `N σ²` for thm2/gaussian, `Var μ₀` for thm3/thm4, as an exact rational.
    pub scale: String,
    pub scale_value: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<(String, String)>,
}

/// Sign of the thm4 variance correction `c · b_N · H₂(u) φ(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thm4Correction {
    /// `c = -1/2`
    Minus,
    /// `c = +1/2`
    Plus,
    /// No correction: plain `Ŵ_N(u_k)`.
    None,
}

impl Thm4Correction {
    fn factor(self) -> i32 {
        match self {
            Thm4Correction::Minus => -1,
            Thm4Correction::Plus => 1,
            Thm4Correction::None => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Thm4Correction::Minus => "-1/2",
            Thm4Correction::Plus => "+1/2",
            Thm4Correction::None => "0",
        }
    }
}

/// The sign chosen by [`calibrate_thm4_sign`]; pinned so reports do not
/// depend on re-running the calibration.
pub const CALIBRATED_THM4_SIGN: Thm4Correction = Thm4Correction::Minus;

/// Everything the expansion-based approximations need for one scheme.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub derived: DerivedParams,
    pub coeffs: EdgeworthCoeffs,
    pub options: ExpansionOptions,
}

impl Expansion {
    pub fn new(params: &SchemeParams, options: ExpansionOptions) -> Result<Self> {
        let derived = scheme::derive(params);
        derived.require_sigma()?;
        let gmom = moments::g_signed_moments(&derived)?;
        let coeffs = moments::edgeworth_coeffs(&derived, &gmom, options.coeffs)?;
        Ok(Self { derived, coeffs, options })
    }

    fn w_hat(&self, x: &Float) -> Float {
        w_hat_with(x, &self.coeffs, self.derived.cells(), self.options.h4)
    }
}

fn check_pmf(pmf: &ExactPmf, derived: &DerivedParams) -> Result<()> {
    if pmf.params != derived.params {
        return Err(Error::Domain(format!(
            "PMF is for {} but the expansion is for {}",
            pmf.params, derived.params
        )));
    }
    Ok(())
}

/// Evaluate `approx(coord_k)` against `scale · P{μ₀ = k}` for
/// `k = 0..=N - n_max`, with `coord_k = (k - center) / scale`.
fn compare(
    method: Method,
    pmf: &ExactPmf,
    center: &Float,
    scale_sq: &Rational,
    approx: impl Fn(&Float) -> Float,
) -> ApproxReport {
    let prec = precision::working();
    let scale = precision::sqrt_rational(scale_sq);
    let mut rows = Vec::with_capacity(pmf.support_max + 1);
    let mut sup = 0.0f64;
    for k in 0..=pmf.support_max {
        let coord = Float::with_val(prec, Float::with_val(prec, k as u64) - center) / &scale;
        let value = approx(&coord);
        let exact = Float::with_val(prec, &scale * precision::from_rational(&pmf.prob(k)));
        let err = Float::with_val(prec, &exact - &value).abs().to_f64();
        sup = sup.max(err);
        rows.push(ApproxRow {
            k,
            coord: coord.to_f64(),
            approx: value.to_f64(),
            exact: exact.to_f64(),
            abs_err: err,
        });
    }
    ApproxReport {
        method,
        rows,
        sup_error: sup,
        scale: scale_sq.to_string(),
        scale_value: scale_sq.to_f64(),
        notes: Vec::new(),
    }
}

/// `Ŵ_N(x_k)` against `√N σ P{μ₀ = k}`, `x_k = (k - N Q_s) / (√N σ)`.
pub fn approx_thm2(expansion: &Expansion, pmf: &ExactPmf) -> Result<ApproxReport> {
    let d = &expansion.derived;
    check_pmf(pmf, d)?;
    let center = precision::from_rational(&d.mean_mu0);
    let scale_sq = Rational::from(&d.sigma2 * d.cells() as u64);
    Ok(compare(Method::Thm2, pmf, &center, &scale_sq, |x| expansion.w_hat(x)))
}

/// Plain normal density at `x_k`.
pub fn approx_gaussian(derived: &DerivedParams, pmf: &ExactPmf) -> Result<ApproxReport> {
    derived.require_sigma()?;
    check_pmf(pmf, derived)?;
    let center = precision::from_rational(&derived.mean_mu0);
    let scale_sq = Rational::from(&derived.sigma2 * derived.cells() as u64);
    Ok(compare(Method::Gaussian, pmf, &center, &scale_sq, precision::normal_density))
}

/// `φ(u)[1 + H₃ L₃/6 + H₆ L₃²/72 + H₄ L₄/24]` at `u_k = (k - Eμ₀)/√Var μ₀`.
pub fn approx_thm3(decomp: &BernoulliDecomposition, pmf: &ExactPmf) -> Result<ApproxReport> {
    let derived = scheme::derive(&pmf.params);
    if derived.var_mu0 == 0 {
        return Err(Error::DegenerateVariance);
    }
    let prec = precision::working();
    let center = precision::from_rational(&derived.mean_mu0);
    let (l3, l4) = decomp.l3_l4()?;
    let l3_sq = Float::with_val(prec, l3.square_ref());
    let mut report = compare(Method::Thm3, pmf, &center, &derived.var_mu0, |u| {
        let bracket = 1u32
            + Float::with_val(prec, hermite_any(3, u) * &l3) / 6u32
            + Float::with_val(prec, hermite_any(6, u) * &l3_sq) / 72u32
            + Float::with_val(prec, hermite_any(4, u) * &l4) / 24u32;
        precision::normal_density(u) * bracket
    });
    report.notes.push(("L3".into(), fmt_float(&l3)));
    report.notes.push(("L4".into(), fmt_float(&l4)));
    Ok(report)
}

/// `Ŵ_N(u_k) + c b_N H₂(u_k) φ(u_k)` against `√Var μ₀ P{μ₀ = k}`.
pub fn approx_thm4(expansion: &Expansion, pmf: &ExactPmf, correction: Thm4Correction) -> Result<ApproxReport> {
    let d = &expansion.derived;
    check_pmf(pmf, d)?;
    let prec = precision::working();
    let center = precision::from_rational(&d.mean_mu0);
    let b_n = precision::from_rational(d.b_n()?);
    let weight = Float::with_val(prec, &b_n * correction.factor()) / 2u32;
    let mut report = compare(Method::Thm4, pmf, &center, &d.var_mu0, |u| {
        let corr = Float::with_val(prec, hermite_any(2, u) * &weight) * precision::normal_density(u);
        expansion.w_hat(u) + corr
    });
    report.notes.push(("correction".into(), correction.label().into()));
    report.notes.push(("b_N".into(), d.b_n()?.to_string()));
    report.notes.push(("b_N_tilde".into(), d.b_n_tilde()?.to_string()));
    Ok(report)
}

pub(crate) fn fmt_float(x: &Float) -> String {
    format!("{:.17e}", x.to_f64())
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Fitted slope of `log(sup_error)` against `log N`.
pub fn sup_error_slope(sweep: &[(usize, f64)]) -> Result<f64> {
    if sweep.len() < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 sweep points, got {}", sweep.len())));
    }
    if let Some((n, e)) = sweep.iter().find(|(_, e)| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateInput(format!("sup error at N = {n} is {e}, must be positive")));
    }
    let mut distinct: Vec<usize> = sweep.iter().map(|(n, _)| *n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateInput("sweep needs at least two distinct N".into()));
    }
    let xs: Vec<f64> = sweep.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = sweep.iter().map(|(_, e)| e.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

/// Set sizes `n_l = p_l N`; fails unless every product is an integer.
pub fn sets_from_proportions(proportions: &[Rational], n: usize) -> Result<Vec<usize>> {
    proportions
        .iter()
        .map(|p| {
            let size = Rational::from(p * n as u64);
            if !size.is_integer() {
                return Err(Error::Domain(format!("p = {p} gives a non-integral set size {size} at N = {n}")));
            }
            size.numer()
                .to_usize()
                .ok_or_else(|| Error::Domain(format!("set size {size} out of range")))
        })
        .collect()
}

/// The calibration scheme for the thm4 correction: `p = (3/10, 1/2)`, `N = 160`.
pub fn calibration_params() -> SchemeParams {
    SchemeParams::new(160, vec![48, 80]).expect("valid calibration scheme")
}

/// Choose the thm4 correction sign minimising the sup error on the
/// calibration scheme. Returns the chosen sign and both sup errors
/// (`-1/2` first).
pub fn calibrate_thm4_sign() -> Result<(Thm4Correction, f64, f64)> {
    let params = calibration_params();
    let pmf = exact::exact_pmf(&params)?;
    let expansion = Expansion::new(&params, ExpansionOptions::default())?;
    let minus = approx_thm4(&expansion, &pmf, Thm4Correction::Minus)?.sup_error;
    let plus = approx_thm4(&expansion, &pmf, Thm4Correction::Plus)?.sup_error;
    let sign = if minus <= plus { Thm4Correction::Minus } else { Thm4Correction::Plus };
    Ok((sign, minus, plus))
}
