//! JSON and CSV renderings. Rationals are exact `"num/den"` strings; floats
//! are rounded to 15 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write;

use rug::Rational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bartlett::BartlettRow;
use crate::edgeworth::ApproxReport;
use crate::exact::ExactPmf;
use crate::moments::{EdgeworthCoeffs, GMoments};
use crate::scheme::{DerivedParams, Diagnostics};
use crate::simulate::EmpiricalPmf;

pub const SIGNIFICANT_DIGITS: usize = 15;

pub fn rational_string(r: &Rational) -> String {
    r.to_string()
}

/// `x` rounded to 15 significant digits, in scientific notation.
pub fn sig(x: f64) -> String {
    if x.is_finite() {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
    } else {
        x.to_string()
    }
}

/// `x` rounded to 15 significant digits, for JSON numbers.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        sig(x).parse().unwrap_or(x)
    } else {
        x
    }
}

/// `{"pmf": [{"k", "p"}], "probs": {"k": "p"}}` over the support.
pub fn pmf_json(pmf: &ExactPmf) -> Value {
    let mut list = Vec::new();
    let mut map = serde_json::Map::new();
    for (k, p) in pmf.iter() {
        list.push(json!({ "k": k, "p": rational_string(p) }));
        map.insert(k.to_string(), Value::String(rational_string(p)));
    }
    json!({
        "support_min": pmf.support_min,
        "support_max": pmf.support_max,
        "pmf": list,
        "probs": map,
    })
}

pub fn pmf_csv(pmf: &ExactPmf) -> String {
    let mut out = String::from("k,p,p_decimal\n");
    for (k, p) in pmf.iter() {
        writeln!(out, "{k},{},{}", rational_string(p), sig(p.to_f64())).unwrap();
    }
    out
}

/// Closed-form scalars: mean, variance, σ², b_N and friends.
pub fn derived_json(derived: &DerivedParams) -> Value {
    let b_n = derived.b_n().ok().map(rational_string);
    let b_n_tilde = derived.b_n_tilde().ok().map(|b| rational_string(&b));
    json!({
        "p": derived.p.iter().map(rational_string).collect::<Vec<_>>(),
        "Q_s": rational_string(&derived.q_s),
        "P_s": rational_string(&derived.p_s),
        "mean": rational_string(&derived.mean_mu0),
        "variance": rational_string(&derived.var_mu0),
        "sigma2": rational_string(&derived.sigma2),
        "alpha": rational_string(&derived.alpha),
        "b_N": b_n,
        "b_N_tilde": b_n_tilde,
        "mean_decimal": round_sig(derived.mean_mu0.to_f64()),
        "variance_decimal": round_sig(derived.var_mu0.to_f64()),
        "sigma2_decimal": round_sig(derived.sigma2.to_f64()),
    })
}

pub fn diagnostics_json(diag: &Diagnostics) -> Value {
    json!({
        "T_N": round_sig(diag.t_n),
        "L_N": round_sig(diag.l_n),
        "abs_moment_ratio": round_sig(diag.ratio_325),
        "sigma_E_abs_g3": round_sig(diag.sigma_eg3),
    })
}

/// Moments of `g̃` and the expansion coefficients.
pub fn moments_json(gmom: &GMoments, coeffs: &EdgeworthCoeffs) -> Value {
    let mut out = json!({
        "E_g2": rational_string(&gmom.eg2),
        "E_g3": round_sig(gmom.eg3.to_f64()),
        "E_g4": rational_string(&gmom.eg4),
        "M2": rational_string(&coeffs.m2_exact),
        "M3": round_sig(coeffs.m3.to_f64()),
        "M3_squared": rational_string(&coeffs.m3_squared),
        "M4": rational_string(&coeffs.m4_exact),
        "options": coeffs.options,
    });
    if let Some(abs) = &gmom.abs {
        out["E_abs_g"] = json!(round_sig(abs.e1.to_f64()));
        out["E_abs_g3"] = json!(round_sig(abs.e3.to_f64()));
        out["E_abs_g5"] = json!(round_sig(abs.e5.to_f64()));
        out["abs_moments_exact"] = json!(abs.exact_raw.is_some());
    }
    out
}

pub fn report_json(report: &ApproxReport) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "k": r.k,
                "coord": round_sig(r.coord),
                "approx": round_sig(r.approx),
                "exact": round_sig(r.exact),
                "abs_err": round_sig(r.abs_err),
            })
        })
        .collect();
    let notes: BTreeMap<&str, &str> = report.notes.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    json!({
        "method": report.method,
        "sup_error": round_sig(report.sup_error),
        "scale": report.scale,
        "scale_decimal": round_sig(report.scale_value),
        "metadata": notes,
        "rows": rows,
    })
}

pub fn report_csv(reports: &[ApproxReport]) -> String {
    let mut out = String::from("method,k,coord,approx,exact,abs_err\n");
    for report in reports {
        for r in &report.rows {
            writeln!(out, "{},{},{},{},{},{}", report.method, r.k, sig(r.coord), sig(r.approx), sig(r.exact), sig(r.abs_err))
                .unwrap();
        }
    }
    out
}

/// One line per method: `method,sup_error`.
pub fn sup_error_csv(reports: &[ApproxReport]) -> String {
    let mut out = String::from("method,sup_error\n");
    for report in reports {
        writeln!(out, "{},{}", report.method, sig(report.sup_error)).unwrap();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub sets: Vec<usize>,
    pub sup_error: f64,
    /// Least-squares slope over the rows up to and including this one,
    /// once three are available.
    pub slope_so_far: Option<f64>,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("N,sup_error,slope_so_far\n");
    for r in rows {
        let slope = r.slope_so_far.map(sig).unwrap_or_default();
        writeln!(out, "{},{},{}", r.n, sig(r.sup_error), slope).unwrap();
    }
    out
}

pub fn bartlett_json(rows: &[BartlettRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| {
                json!({
                    "t": r.t,
                    "re_bartlett": round_sig(r.re_bartlett),
                    "im_bartlett": round_sig(r.im_bartlett),
                    "re_exact": round_sig(r.re_exact),
                    "im_exact": round_sig(r.im_exact),
                    "abs_diff": round_sig(r.abs_diff),
                })
            })
            .collect(),
    )
}

pub fn bartlett_csv(rows: &[BartlettRow]) -> String {
    let mut out = String::from("t,re_bartlett,im_bartlett,re_exact,im_exact,abs_diff\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            sig(r.re_bartlett),
            sig(r.im_bartlett),
            sig(r.re_exact),
            sig(r.im_exact),
            sig(r.abs_diff)
        )
        .unwrap();
    }
    out
}

pub fn empirical_json(emp: &EmpiricalPmf) -> Value {
    let rows: Vec<Value> = emp
        .rows()
        .iter()
        .map(|r| json!({ "k": r.k, "count": r.count, "freq": round_sig(r.freq), "std_error": round_sig(r.std_error) }))
        .collect();
    json!({ "trials": emp.trials, "counts": rows })
}

pub fn empirical_csv(emp: &EmpiricalPmf) -> String {
    let mut out = String::from("k,count,freq,std_error\n");
    for r in emp.rows() {
        writeln!(out, "{},{},{},{}", r.k, r.count, sig(r.freq), sig(r.std_error)).unwrap();
    }
    out
}
