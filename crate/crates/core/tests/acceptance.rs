//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Float, Rational};

use occupancy::bartlett::{self, QuadratureSpec};
use occupancy::bernoulli;
use occupancy::edgeworth::{self, Expansion, ExpansionOptions, Thm4Correction};
use occupancy::exact::{self, ExactPmf, OracleLimits};
use occupancy::moments;
use occupancy::precision;
use occupancy::scheme::{self, SchemeParams};
use occupancy::simulate::{self, SimConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn params(n: usize, sets: &[usize]) -> SchemeParams {
    SchemeParams::new(n, sets.to_vec()).expect("valid scheme")
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// 200 random schemes with N ≤ 40, s ≤ 4.
fn random_cases() -> Vec<SchemeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    (0..200)
        .map(|_| {
            let n = rng.gen_range(2..=40);
            let s = rng.gen_range(1..=4);
            let sets: Vec<usize> = (0..s).map(|_| rng.gen_range(1..n)).collect();
            params(n, &sets)
        })
        .collect()
}

fn all_tuples(n: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..s {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (1..n).map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut cases = Vec::new();
    for n in 2..=8 {
        for s in 1..=3 {
            cases.extend(all_tuples(n, s).into_iter().map(|sets| params(n, &sets)));
        }
    }
    let exhaustive = cases.len();
    let limits = OracleLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut random = 0;
    while random < 50 {
        let n = rng.gen_range(9..=18);
        let s = rng.gen_range(1..=4);
        let sets: Vec<usize> = (0..s).map(|_| rng.gen_range(1..n)).collect();
        let work: f64 = sets.iter().map(|k| binomial(n, *k)).product();
        if work <= limits.enumeration_cap as f64 {
            cases.push(params(n, &sets));
            random += 1;
        }
    }
    for p in &cases {
        let fast = exact::exact_pmf(p).map_err(|e| e.to_string())?;
        let brute = exact::enumerate_pmf(p).map_err(|e| format!("{p}: {e}"))?;
        check(fast.iter().eq(brute.iter()), || format!("mismatch at {p}"))?;
        check(fast.total() == 1, || format!("{p} does not sum to one"))?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{exhaustive} exhaustive + {random} random cases equal"))
}

fn criterion_2() -> Outcome {
    let mut degenerate = 0;
    for p in random_cases() {
        let pmf = exact::exact_pmf(&p).map_err(|e| e.to_string())?;
        let m = exact::pmf_moments(&pmf);
        let d = scheme::derive(&p);
        let n = p.cells() as u64;
        check(m.mean == Rational::from(&d.q_s * n), || format!("mean at {p}"))?;
        let expected = match d.b_n() {
            Ok(b) => Rational::from(&d.sigma2 * n) * (Rational::from(1) + b),
            Err(_) => {
                degenerate += 1;
                Rational::new()
            }
        };
        check(m.variance == expected, || format!("variance at {p}: {} vs {expected}", m.variance))?;
        check(m.variance == d.var_mu0, || format!("closed-form variance at {p}"))?;
    }
    Ok(format!("200 cases exact ({degenerate} with σ² = 0 and zero variance)"))
}

/// `E g`, `E g x_l`, `E g x_l²` over the `2^s` outcomes, straight from the
/// definition of `g`.
fn brute_orthogonality(d: &scheme::DerivedParams) -> Vec<Rational> {
    let s = d.num_sets();
    let mut out = vec![Rational::new(); 1 + 2 * s];
    for mask in 0usize..1 << s {
        let u: Vec<u32> = (0..s).map(|l| ((mask >> l) & 1) as u32).collect();
        let mut prob = Rational::from(1);
        let mut g = if mask == 0 { Rational::from(1) } else { Rational::new() } - d.q_s.clone();
        for l in 0..s {
            prob *= if u[l] == 1 { &d.p[l] } else { &d.q[l] };
            let x = Rational::from(u[l]) - &d.p[l];
            g += (&d.q_s * x) / &d.q[l];
        }
        let weight = Rational::from(&prob * &g);
        out[0] += &weight;
        for l in 0..s {
            let x = Rational::from(u[l]) - &d.p[l];
            out[1 + l] += Rational::from(&weight * &x);
            out[1 + s + l] += weight.clone() * x.square();
        }
    }
    out
}

fn criterion_3() -> Outcome {
    for p in random_cases() {
        let d = scheme::derive(&p);
        let raw = moments::g_raw_moments(&d);
        check(raw.power[1] == 0, || format!("E g at {p}"))?;
        check(raw.g_x.iter().all(|v| *v == 0), || format!("E g x at {p}"))?;
        check(raw.g_x2.iter().all(|v| *v == 0), || format!("E g x² at {p}"))?;
        check(brute_orthogonality(&d).iter().all(|v| *v == 0), || format!("enumerated identities at {p}"))?;
    }
    Ok("all identities are rational zeros on 200 cases".into())
}

fn rel_gap(x: &Float, exact: &Rational) -> f64 {
    let e = precision::from_rational(exact);
    let diff = Float::with_val(precision::working(), x - &e).abs();
    if *exact == 0 {
        diff.to_f64()
    } else {
        (diff / e.abs()).to_f64()
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut cases = random_cases();
    for n in [10, 20, 30, 40] {
        cases.push(params(n, &[3 * n / 10, n / 2]));
        cases.push(params(n, &[1; 4]));
    }
    let mut worst_rel: f64 = 0.0;
    let mut worst_pmf: f64 = 0.0;
    for p in &cases {
        let pmf = exact::exact_pmf(p).map_err(|e| e.to_string())?;
        let decomp = bernoulli::decompose(&pmf).map_err(|e| format!("{p}: {e}"))?;
        check(decomp.roots.iter().all(|r| *r <= 0), || format!("positive root at {p}"))?;
        let prec = precision::working();
        let mean = decomp.a.iter().fold(Float::new(prec), |acc, a| acc + a);
        let var = decomp
            .a
            .iter()
            .fold(Float::new(prec), |acc, a| acc + Float::with_val(prec, a * Float::with_val(prec, 1u32 - a)));
        let d = scheme::derive(p);
        let rel = rel_gap(&mean, &d.mean_mu0).max(rel_gap(&var, &d.var_mu0));
        let gap = bernoulli::reconstruction_gap(&decomp, &pmf);
        worst_rel = worst_rel.max(rel);
        worst_pmf = worst_pmf.max(gap);
        check(rel <= 1e-10, || format!("moment gap {rel:e} at {p}"))?;
        check(gap <= 1e-9, || format!("PMF gap {gap:e} at {p}"))?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("{} cases, moment rel gap ≤ {worst_rel:.1e}, PMF gap ≤ {worst_pmf:.1e}", cases.len()))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let quad = QuadratureSpec { tolerance: 1e-7, ..Default::default() };
    let mut worst: f64 = 0.0;
    for (n, sets) in [(6, [2, 3]), (12, [4, 6])] {
        let rows = bartlett::verify(&params(n, &sets), &[0.5, 1.0, 2.0], &quad).map_err(|e| e.to_string())?;
        for r in rows {
            worst = worst.max(r.abs_diff);
            check(r.abs_diff <= 1e-5, || format!("N={n} t={}: {:e}", r.t, r.abs_diff))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("max |φ_quad - φ_exact| = {worst:.2e}"))
}

const SWEEP: [usize; 5] = [20, 40, 80, 160, 320];

fn proportions() -> Vec<Rational> {
    vec![Rational::from((3, 10)), Rational::from((1, 2))]
}

fn sweep_params(n: usize) -> SchemeParams {
    SchemeParams::new(n, edgeworth::sets_from_proportions(&proportions(), n).unwrap()).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    check(precision::working() >= 128, || "precision below 128 bits".into())?;
    let mut sweep = Vec::new();
    for n in SWEEP {
        let p = sweep_params(n);
        let pmf = exact::exact_pmf(&p).map_err(|e| e.to_string())?;
        let expansion = Expansion::new(&p, ExpansionOptions::default()).map_err(|e| e.to_string())?;
        let report = edgeworth::approx_thm2(&expansion, &pmf).map_err(|e| e.to_string())?;
        sweep.push((n, report.sup_error));
    }
    check(sweep.windows(2).all(|w| w[1].1 < w[0].1), || format!("not strictly decreasing: {sweep:?}"))?;
    let slope = edgeworth::sup_error_slope(&sweep).map_err(|e| e.to_string())?;
    check((-2.0..=-1.0).contains(&slope), || format!("slope {slope:.4} outside [-2, -1]"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    let errs: Vec<String> = sweep.iter().map(|(_, e)| format!("{e:.2e}")).collect();
    Ok(format!("sup errors [{}], slope {slope:.4}", errs.join(", ")))
}

fn criterion_7() -> Outcome {
    let p = sweep_params(160);
    let pmf = exact::exact_pmf(&p).map_err(|e| e.to_string())?;
    let expansion = Expansion::new(&p, ExpansionOptions::default()).map_err(|e| e.to_string())?;
    let thm2 = edgeworth::approx_thm2(&expansion, &pmf).map_err(|e| e.to_string())?.sup_error;
    let gauss = edgeworth::approx_gaussian(&expansion.derived, &pmf).map_err(|e| e.to_string())?.sup_error;
    let (sign, _, _) = edgeworth::calibrate_thm4_sign().map_err(|e| e.to_string())?;
    let thm4 = edgeworth::approx_thm4(&expansion, &pmf, sign).map_err(|e| e.to_string())?.sup_error;
    let plain = edgeworth::approx_thm4(&expansion, &pmf, Thm4Correction::None).map_err(|e| e.to_string())?.sup_error;
    check(thm2 < gauss, || format!("thm2 {thm2:e} ≥ gaussian {gauss:e}"))?;
    check(thm4 <= plain, || format!("thm4 {thm4:e} > uncorrected {plain:e}"))?;
    Ok(format!(
        "thm2 {thm2:.2e} < gaussian {gauss:.2e}; thm4 ({}) {thm4:.2e} ≤ uncorrected {plain:.2e}",
        sign.label()
    ))
}

fn criterion_8() -> Outcome {
    let mut errs = Vec::new();
    let mut gauss_at_60 = f64::NAN;
    for n in [20, 40, 60] {
        let p = sweep_params(n);
        let pmf = exact::exact_pmf(&p).map_err(|e| e.to_string())?;
        let decomp = bernoulli::decompose(&pmf).map_err(|e| e.to_string())?;
        errs.push(edgeworth::approx_thm3(&decomp, &pmf).map_err(|e| e.to_string())?.sup_error);
        if n == 60 {
            gauss_at_60 = edgeworth::approx_gaussian(&scheme::derive(&p), &pmf).map_err(|e| e.to_string())?.sup_error;
        }
    }
    check(errs.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {errs:?}"))?;
    check(errs[2] < gauss_at_60, || format!("N=60 thm3 {:e} ≥ gaussian {gauss_at_60:e}", errs[2]))?;
    Ok(format!(
        "sup errors {:.2e}, {:.2e}, {:.2e}; gaussian at N=60 {gauss_at_60:.2e}",
        errs[0], errs[1], errs[2]
    ))
}

fn criterion_9() -> Outcome {
    let p = params(20, &[5, 7, 3]);
    let config = SimConfig::new(p.clone(), 100_000, 20_240_917).map_err(|e| e.to_string())?;
    let emp = simulate::empirical_pmf(&config);
    let pmf: ExactPmf = exact::exact_pmf(&p).map_err(|e| e.to_string())?;
    let tv = exact::total_variation(&pmf, &emp.frequencies());
    check(tv <= 0.01, || format!("TV {tv}"))?;
    let (mean, half) = simulate::mc_mean_ci(&emp).map_err(|e| e.to_string())?;
    let target = scheme::derive(&p).mean_mu0.to_f64();
    check((mean - target).abs() <= half, || format!("mean {mean} outside {target} ± {half}"))?;
    let again = simulate::empirical_pmf(&config);
    let bytes = |e: &simulate::EmpiricalPmf| serde_json::to_vec(e).expect("serializable");
    check(bytes(&emp) == bytes(&again), || "rerun differs".into())?;
    Ok(format!("TV {tv:.4}, mean {mean:.4} vs {target:.4} ± {half:.4}, rerun identical"))
}

fn criterion_10() -> Outcome {
    let prec = precision::working();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let x = Float::with_val(prec, -10) + Float::with_val(prec, 20 * i) / 999u32;
        let x2 = Float::with_val(prec, x.square_ref());
        let x4 = Float::with_val(prec, x2.square_ref());
        let x6 = Float::with_val(prec, &x4 * &x2);
        let closed_forms: [(u32, Float); 4] = [
            (2, Float::with_val(prec, &x2 - 1u32)),
            (3, Float::with_val(prec, &x2 - 3u32) * &x),
            (4, x4.clone() - Float::with_val(prec, &x2 * 6u32) + 3u32),
            (6, x6 - Float::with_val(prec, &x4 * 15u32) + Float::with_val(prec, &x2 * 45u32) - 15u32),
        ];
        for (order, closed) in closed_forms {
            let rec = edgeworth::hermite(order, &x).map_err(|e| e.to_string())?;
            let diff = Float::with_val(prec, rec - closed).abs().to_f64();
            worst = worst.max(diff);
        }
    }
    check(worst <= 1e-30, || format!("Hermite gap {worst:e}"))?;

    let p = sweep_params(160);
    let expansion = Expansion::new(&p, ExpansionOptions::default()).map_err(|e| e.to_string())?;
    let rule = GaussLegendre::new(20.try_into().unwrap()).map_err(|e| e.to_string())?;
    let panels = 96;
    let width = 24.0 / panels as f64;
    let mut integral = 0.0;
    for j in 0..panels {
        let a = -12.0 + width * j as f64;
        integral += rule.integrate(a, a + width, |x| {
            edgeworth::w_hat(&Float::with_val(prec, x), &expansion.coeffs, p.cells()).to_f64()
        });
    }
    check((integral - 1.0).abs() <= 1e-10, || format!("∫Ŵ_N = {integral}"))?;
    Ok(format!("Hermite gap {worst:.1e}; ∫Ŵ_N - 1 = {:.1e}", integral - 1.0))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle agreement", criterion_1),
        ("mean/variance identities", criterion_2),
        ("orthogonality", criterion_3),
        ("Bernoulli round trip", criterion_4),
        ("characteristic function by quadrature", criterion_5),
        ("sup-error rate", criterion_6),
        ("approximant ordering", criterion_7),
        ("Bernoulli expansion decay", criterion_8),
        ("Monte Carlo consistency", criterion_9),
        ("Hermite and density checks", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let line = match &outcome {
            Ok(detail) => format!("PASS  criterion {:>2} {name}: {detail} [{elapsed:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                format!("FAIL  criterion {:>2} {name}: {why} [{elapsed:.1?}]", i + 1)
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
