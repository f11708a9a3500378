//! Characteristic function of μ₀ through the conditional (Bartlett)
//! representation
//!
//! ```text
//! Θ_N(t) = ∫_{A₀} Ψ^N(t, τ) dτ,   Ψ(t, τ) = E exp{i (t g̃ + Σ τ_l ξ̃_l) / √N},
//! A₀ = { |τ_l| ≤ π √(N p_l q_l) },     φ_N(t) = Θ_N(t) / Θ_N(0),
//! ```
//!
//! where `φ_N` is the characteristic function of `(μ₀ - N Q_s) / (σ √N)`.
//! Only the ratio is computed, so the normalising constant never appears.

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::exact::{exact_charfun, exact_pmf};
use crate::precision;
use crate::scheme::{derive, DerivedParams, SchemeParams};
use crate::{Error, Result};

pub const MAX_PSI_SETS: usize = 20;
pub const MAX_QUADRATURE_SETS: usize = 3;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureSpec {
    /// Panels per dimension at the first pass.
    pub panels: usize,
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Target absolute error of `φ_N`.
    pub tolerance: f64,
    /// Panel doubling stops here.
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panels: 2, nodes: 16, tolerance: 1e-9, max_panels: 64 }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!("quadrature tolerance must be positive, got {}", self.tolerance)));
        }
        if self.panels == 0 || self.nodes == 0 || self.max_panels < self.panels {
            return Err(Error::Domain("quadrature needs at least one panel and one node".into()));
        }
        Ok(())
    }
}

/// Values of `g̃` and `ξ̃_l` on the `2^s` outcomes of `(u_1, …, u_s)`.
#[derive(Debug, Clone)]
struct Outcomes {
    cells: usize,
    /// `(P(u), g̃(u))` indexed by the bitmask of `u`
    atoms: Vec<(f64, f64)>,
    /// `ξ̃_l` at `u_l = 0` and `u_l = 1`
    xi: Vec<[f64; 2]>,
    half_width: Vec<f64>,
}

impl Outcomes {
    fn new(derived: &DerivedParams) -> Result<Self> {
        let s = derived.num_sets();
        if s > MAX_PSI_SETS {
            return Err(Error::DimensionCap { s, cap: MAX_PSI_SETS });
        }
        derived.require_sigma()?;
        let n = derived.cells() as f64;
        let sigma = derived.sigma().to_f64();
        let q_s = derived.q_s.to_f64();
        let p: Vec<f64> = derived.p.iter().map(|x| x.to_f64()).collect();
        let q: Vec<f64> = derived.q.iter().map(|x| x.to_f64()).collect();
        let mut atoms = Vec::with_capacity(1 << s);
        for mask in 0usize..1 << s {
            let mut prob = 1.0;
            let mut g = if mask == 0 { 1.0 - q_s } else { -q_s };
            for l in 0..s {
                let u = ((mask >> l) & 1) as f64;
                prob *= if u == 1.0 { p[l] } else { q[l] };
                g += q_s * (u - p[l]) / q[l];
            }
            atoms.push((prob, g / sigma));
        }
        let xi = p
            .iter()
            .zip(&q)
            .map(|(p, q)| {
                let root = (p * q).sqrt();
                [-p / root, q / root]
            })
            .collect();
        let half_width = p.iter().zip(&q).map(|(p, q)| std::f64::consts::PI * (n * p * q).sqrt()).collect();
        Ok(Self { cells: derived.cells(), atoms, xi, half_width })
    }

    fn weighted(&self, t: f64) -> Vec<Complex64> {
        let root_n = (self.cells as f64).sqrt();
        self.atoms
            .iter()
            .map(|(prob, g)| Complex64::from_polar(*prob, t * g / root_n))
            .collect()
    }

    fn psi(&self, weighted: &[Complex64], tau: &[f64]) -> Complex64 {
        let root_n = (self.cells as f64).sqrt();
        let factors: Vec<[Complex64; 2]> = tau
            .iter()
            .zip(&self.xi)
            .map(|(t, xi)| [Complex64::from_polar(1.0, t * xi[0] / root_n), Complex64::from_polar(1.0, t * xi[1] / root_n)])
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (mask, w) in weighted.iter().enumerate() {
            let mut term = *w;
            for (l, f) in factors.iter().enumerate() {
                term *= f[(mask >> l) & 1];
            }
            acc += term;
        }
        acc
    }
}

/// `Ψ(t, τ)` summed over the `2^s` outcomes.
pub fn psi(t: f64, tau: &[f64], derived: &DerivedParams) -> Result<Complex64> {
    let outcomes = Outcomes::new(derived)?;
    if tau.len() != derived.num_sets() {
        return Err(Error::Domain(format!("τ has length {}, expected {}", tau.len(), derived.num_sets())));
    }
    Ok(outcomes.psi(&outcomes.weighted(t), tau))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThetaEstimate {
    pub re: f64,
    pub im: f64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
    pub panels: usize,
}

impl ThetaEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn tensor_rule(outcomes: &Outcomes, t: f64, panels: usize, gl: &[(f64, f64)]) -> Complex64 {
    let axes: Vec<Vec<(f64, f64)>> = outcomes
        .half_width
        .iter()
        .map(|h| {
            let width = 2.0 * h / panels as f64;
            (0..panels)
                .flat_map(|j| {
                    let left = -h + width * j as f64;
                    gl.iter().map(move |(x, w)| (left + width * (x + 1.0) / 2.0, w * width / 2.0))
                })
                .collect()
        })
        .collect();
    let weighted = outcomes.weighted(t);
    let power = outcomes.cells as u32;
    let rest: usize = axes[1..].iter().map(Vec::len).product();
    axes[0]
        .par_iter()
        .map(|&(tau0, w0)| {
            let mut tau = vec![0.0; axes.len()];
            tau[0] = tau0;
            let mut acc = Complex64::new(0.0, 0.0);
            for flat in 0..rest {
                let mut weight = w0;
                let mut idx = flat;
                for (l, axis) in axes.iter().enumerate().skip(1) {
                    let (x, w) = axis[idx % axis.len()];
                    idx /= axis.len();
                    tau[l] = x;
                    weight *= w;
                }
                acc += outcomes.psi(&weighted, &tau).powu(power) * weight;
            }
            acc
        })
        .reduce(|| Complex64::new(0.0, 0.0), |a, b| a + b)
}

/// `Θ_N(t)` by tensor Gauss–Legendre, doubling the panels per dimension
/// until two successive estimates agree to `tolerance`.
pub fn theta(t: f64, derived: &DerivedParams, quad: &QuadratureSpec) -> Result<ThetaEstimate> {
    quad.validate()?;
    let s = derived.num_sets();
    if s > MAX_QUADRATURE_SETS {
        return Err(Error::DimensionCap { s, cap: MAX_QUADRATURE_SETS });
    }
    let outcomes = Outcomes::new(derived)?;
    let rule = GaussLegendre::new(quad.nodes);
    let gl: Vec<(f64, f64)> = match rule {
        Ok(rule) => rule.iter().map(|(x, w)| (*x, *w)).collect(),
        Err(_) if quad.nodes == 1 => vec![(0.0, 2.0)],
        Err(e) => return Err(Error::Domain(format!("Gauss–Legendre rule: {e}"))),
    };

    let mut panels = quad.panels;
    let mut previous = tensor_rule(&outcomes, t, panels, &gl);
    let mut achieved = f64::INFINITY;
    while panels * 2 <= quad.max_panels {
        panels *= 2;
        let current = tensor_rule(&outcomes, t, panels, &gl);
        achieved = (current - previous).norm();
        previous = current;
        if achieved < quad.tolerance {
            return Ok(ThetaEstimate { re: current.re, im: current.im, error_estimate: achieved, panels });
        }
    }
    Err(Error::ToleranceNotReached {
        requested: quad.tolerance,
        achieved,
        estimate: format!("{} {:+}i", previous.re, previous.im),
    })
}

/// `φ_N(t) = Θ_N(t) / Θ_N(0)`.
pub fn phi_via_bartlett(t: f64, derived: &DerivedParams, quad: &QuadratureSpec) -> Result<Complex64> {
    let theta0 = theta(0.0, derived, &QuadratureSpec { tolerance: quad.tolerance / 4.0, ..*quad })?;
    let scale = theta0.value().norm().min(1.0);
    let tight = QuadratureSpec { tolerance: quad.tolerance * scale / 4.0, ..*quad };
    let theta0 = if scale < 1.0 { theta(0.0, derived, &tight)? } else { theta0 };
    if t == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let theta_t = theta(t, derived, &tight)?;
    Ok(theta_t.value() / theta0.value())
}

#[derive(Debug, Clone, Serialize)]
pub struct BartlettRow {
    pub t: f64,
    pub re_bartlett: f64,
    pub im_bartlett: f64,
    pub re_exact: f64,
    pub im_exact: f64,
    pub abs_diff: f64,
}

/// Compare `φ_N` from the quadrature with the exact characteristic function
/// of `(μ₀ - N Q_s) / (σ √N)` at each `t`.
pub fn verify(params: &SchemeParams, ts: &[f64], quad: &QuadratureSpec) -> Result<Vec<BartlettRow>> {
    let derived = derive(params);
    let s = derived.num_sets();
    if s > MAX_QUADRATURE_SETS {
        return Err(Error::DimensionCap { s, cap: MAX_QUADRATURE_SETS });
    }
    derived.require_sigma()?;
    let pmf = exact_pmf(params)?;
    let center = precision::from_rational(&rug::Rational::from(&derived.q_s * derived.cells() as u64));
    let scale = derived.sqrt_n_sigma();
    ts.iter()
        .map(|&t| {
            let approx = phi_via_bartlett(t, &derived, quad)?;
            let exact = exact_charfun(&pmf, t, &center, &scale);
            let exact = Complex64::new(exact.real().to_f64(), exact.imag().to_f64());
            Ok(BartlettRow {
                t,
                re_bartlett: approx.re,
                im_bartlett: approx.im,
                re_exact: exact.re,
                im_exact: exact.im,
                abs_diff: (approx - exact).norm(),
            })
        })
        .collect()
}
