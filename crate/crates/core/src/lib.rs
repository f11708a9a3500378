//! Exact distribution and local Edgeworth-type approximations for the number
//! of empty cells μ₀ in the equiprobable allocation-by-sets scheme.
//!
//! `N` cells receive `s` independent sets of particles; set `l` occupies
//! `n_l` distinct cells chosen uniformly among the `C(N, n_l)` subsets.
//!
//! The crate is organised around a few layers:
//!
//! * [`scheme`]: parameter validation and every closed-form scalar derived
//!   from `(N, n_1, …, n_s)`, in exact rational arithmetic.
//! * [`exact`]: the exact PMF of μ₀ (inclusion–exclusion and brute-force
//!   enumeration), its moments and characteristic function.
//! * [`moments`]: moments of the standardized kernel `g̃` and of the
//!   standardized Bernoulli variables, and the expansion coefficients.
//! * [`edgeworth`]: Hermite polynomials, the density approximant `Ŵ_N` and
//!   the local approximations compared against the exact PMF.
//! * [`bernoulli`]: factorisation of the probability generating function
//!   into Bernoulli factors.
//! * [`bartlett`]: quadrature of the conditional characteristic function
//!   representation.
//! * [`simulate`]: Monte Carlo simulation of the scheme.

pub mod bartlett;
pub mod bernoulli;
pub mod binomial;
pub mod edgeworth;
pub mod error;
pub mod exact;
pub mod moments;
pub mod precision;
pub mod scheme;
pub mod serialize;
pub mod simulate;

pub use error::{Error, Result};
pub use scheme::{DerivedParams, Diagnostics, SchemeParams};
