//! `occupancy`: exact distributions, approximation comparisons, convergence
//! sweeps, characteristic-function checks and simulation for the number of
//! empty cells under allocation by sets.

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rug::{Integer, Rational};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use occupancy::bartlett::{self, QuadratureSpec};
use occupancy::bernoulli;
use occupancy::edgeworth::{self, ApproxReport, Expansion, ExpansionOptions, Method, Thm4Correction};
use occupancy::exact::{self, total_variation};
use occupancy::moments::{self, CoeffOptions};
use occupancy::serialize::{self as ser, SweepRow};
use occupancy::simulate::{self, SimConfig};
use occupancy::{precision, scheme, Error, SchemeParams};

const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "occupancy", version, about = "Empty cells under allocation by sets")]
struct Cli {
    /// Output format
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,

    /// Worker threads for parallel sections
    #[arg(long, env = "OCCUPANCY_THREADS", global = true)]
    threads: Option<usize>,

    /// Working precision of the multiprecision paths, in bits (>= 128)
    #[arg(long, default_value_t = precision::DEFAULT_PRECISION, global = true)]
    precision: u32,

    /// Manifest timestamp in Unix seconds; defaults to SOURCE_DATE_EPOCH,
    /// then to the current time
    #[arg(long, env = "SOURCE_DATE_EPOCH", global = true)]
    timestamp: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact PMF of μ₀ and its closed-form scalars
    Exact(SchemeArgs),
    /// Compare local approximations with the exact PMF
    Compare(CompareArgs),
    /// Sup-error sweep over N with fixed set proportions
    Convergence(ConvergenceArgs),
    /// Characteristic function by quadrature against the exact one
    Bartlett(BartlettArgs),
    /// Monte Carlo simulation of the scheme
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
struct SchemeArgs {
    /// Number of cells N
    #[arg(long)]
    cells: usize,
    /// Set sizes n_1,…,n_s
    #[arg(long, value_delimiter = ',', required = true)]
    sets: Vec<usize>,
}

impl SchemeArgs {
    fn params(&self) -> Result<SchemeParams, Error> {
        SchemeParams::new(self.cells, self.sets.clone())
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CorrectionArg {
    Minus,
    Plus,
    None,
}

impl From<CorrectionArg> for Thm4Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Minus => Thm4Correction::Minus,
            CorrectionArg::Plus => Thm4Correction::Plus,
            CorrectionArg::None => Thm4Correction::None,
        }
    }
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Methods among thm2, thm3, thm4, gaussian
    #[arg(long, value_delimiter = ',', default_value = "thm2,thm3,thm4,gaussian")]
    methods: Vec<Method>,
    /// Sign of the thm4 variance correction
    #[arg(long, value_enum, default_value = "minus")]
    thm4_correction: CorrectionArg,
    /// CSV only: per-k rows instead of one sup-error row per method
    #[arg(long)]
    detail: bool,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    /// Set proportions p_l, as decimals or fractions
    #[arg(long = "p", value_delimiter = ',', required = true)]
    proportions: Vec<String>,
    /// Values of N; every p_l N must be an integer
    #[arg(long = "N", value_delimiter = ',', required = true)]
    cells: Vec<usize>,
    #[arg(long, default_value = "thm2")]
    method: Method,
    #[arg(long, value_enum, default_value = "minus")]
    thm4_correction: CorrectionArg,
    /// Accepted slope window
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    slope_min: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    slope_max: f64,
}

#[derive(Args, Debug)]
struct BartlettArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Arguments t of the characteristic function
    #[arg(long = "t", value_delimiter = ',', default_value = "0.5,1,2", allow_hyphen_values = true)]
    ts: Vec<f64>,
    /// Target absolute error
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = QuadratureSpec::default().panels)]
    panels: usize,
    #[arg(long, default_value_t = QuadratureSpec::default().nodes)]
    nodes: usize,
    #[arg(long, default_value_t = QuadratureSpec::default().max_panels)]
    max_panels: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report the total-variation distance to the exact PMF
    #[arg(long)]
    exact: bool,
}

/// Parse `0.3`, `3/10` or `1` exactly.
fn parse_proportion(s: &str) -> Result<Rational, Error> {
    let bad = || Error::Domain(format!("cannot parse proportion {s:?}"));
    let s = s.trim();
    if s.contains('/') {
        return s.parse::<Rational>().map_err(|_| bad());
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{}{}", if int.is_empty() { "0" } else { int }, frac);
    let numer: Integer = digits.parse().map_err(|_| bad())?;
    Ok(Rational::from((numer, Integer::from(Integer::u_pow_u(10, frac.len() as u32)))))
}

struct Manifest {
    command: &'static str,
    params: Value,
    options: Value,
    timestamp: u64,
    precision: u32,
}

impl Manifest {
    fn to_json(&self) -> Value {
        let version = env!("CARGO_PKG_VERSION");
        let input = json!({
            "command": self.command,
            "params": self.params,
            "options": self.options,
            "version": version,
            "precision": self.precision,
        });
        let hash = Sha256::digest(input.to_string().as_bytes());
        json!({
            "command": self.command,
            "params": self.params,
            "options": self.options,
            "version": version,
            "precision": self.precision,
            "timestamp": self.timestamp,
            "input_hash": format!("{hash:x}"),
        })
    }
}

enum Artifact {
    Json(Value),
    Csv(String),
}

fn emit(manifest: &Manifest, artifact: Artifact) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    match artifact {
        Artifact::Json(mut body) => {
            let mut doc = serde_json::Map::new();
            doc.insert("schema".into(), json!(SCHEMA));
            doc.insert("manifest".into(), manifest.to_json());
            if let Value::Object(fields) = body.take() {
                doc.extend(fields);
            }
            serde_json::to_writer_pretty(&mut out, &Value::Object(doc))?;
            writeln!(out)
        }
        Artifact::Csv(body) => {
            writeln!(out, "# schema: {SCHEMA}")?;
            writeln!(out, "# manifest: {}", manifest.to_json())?;
            out.write_all(body.as_bytes())
        }
    }
}

fn scheme_json(params: &SchemeParams) -> Value {
    json!({ "cells": params.cells(), "sets": params.sets() })
}

fn cmd_exact(args: &SchemeArgs, format: Format) -> Result<(Value, Value, Artifact), Error> {
    let params = args.params()?;
    let pmf = exact::exact_pmf(&params)?;
    let derived = scheme::derive(&params);
    let artifact = match format {
        Format::Csv => Artifact::Csv(ser::pmf_csv(&pmf)),
        Format::Json => {
            let mut body = ser::pmf_json(&pmf);
            body["derived"] = ser::derived_json(&derived);
            if !derived.is_degenerate() {
                let gmom = moments::g_moments(&derived)?;
                let diag = scheme::diagnostics(&derived, &gmom)?;
                body["diagnostics"] = ser::diagnostics_json(&diag);
                let coeffs = moments::edgeworth_coeffs(&derived, &gmom, CoeffOptions::default())?;
                body["moments"] = ser::moments_json(&gmom, &coeffs);
            }
            Artifact::Json(body)
        }
    };
    Ok((scheme_json(&params), json!({}), artifact))
}

fn run_method(
    method: Method,
    params: &SchemeParams,
    pmf: &exact::ExactPmf,
    expansion: Option<&Expansion>,
    correction: Thm4Correction,
) -> Result<ApproxReport, Error> {
    let need_expansion = || expansion.ok_or_else(|| Error::DegenerateSigma(params.to_string()));
    match method {
        Method::Thm2 => edgeworth::approx_thm2(need_expansion()?, pmf),
        Method::Thm4 => edgeworth::approx_thm4(need_expansion()?, pmf, correction),
        Method::Gaussian => edgeworth::approx_gaussian(&scheme::derive(params), pmf),
        Method::Thm3 => edgeworth::approx_thm3(&bernoulli::decompose(pmf)?, pmf),
    }
}

fn cmd_compare(args: &CompareArgs, format: Format) -> Result<(Value, Value, Artifact), Error> {
    let params = args.scheme.params()?;
    let derived = scheme::derive(&params);
    let mut methods = args.methods.clone();
    methods.dedup();
    if !methods.contains(&Method::Gaussian) {
        methods.push(Method::Gaussian);
    }
    if methods.iter().any(|m| *m != Method::Thm3) {
        derived.require_sigma()?;
    }
    let pmf = exact::exact_pmf(&params)?;
    let expansion = if derived.is_degenerate() {
        None
    } else {
        Some(Expansion::new(&params, ExpansionOptions::default())?)
    };
    let correction: Thm4Correction = args.thm4_correction.into();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for method in &methods {
        match run_method(*method, &params, &pmf, expansion.as_ref(), correction) {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(json!({ "method": method, "error": e.to_string(), "exit_code": e.exit_code() })),
        }
    }
    let options = json!({ "methods": methods, "thm4_correction": correction, "detail": args.detail });
    let artifact = match format {
        Format::Csv if args.detail => Artifact::Csv(ser::report_csv(&reports)),
        Format::Csv => {
            let mut csv = ser::sup_error_csv(&reports);
            for f in &failures {
                csv.push_str(&format!("{},\n", f["method"].as_str().unwrap_or_default()));
            }
            Artifact::Csv(csv)
        }
        Format::Json => Artifact::Json(json!({
            "derived": ser::derived_json(&derived),
            "reports": reports.iter().map(ser::report_json).collect::<Vec<_>>(),
            "failures": failures,
        })),
    };
    Ok((scheme_json(&params), options, artifact))
}

fn cmd_convergence(args: &ConvergenceArgs, format: Format) -> Result<(Value, Value, Artifact), Error> {
    let proportions = args.proportions.iter().map(|s| parse_proportion(s)).collect::<Result<Vec<_>, _>>()?;
    let mut cells = args.cells.clone();
    cells.sort_unstable();
    cells.dedup();
    let mut plans = Vec::new();
    for &n in &cells {
        let sets = edgeworth::sets_from_proportions(&proportions, n)?;
        let params = SchemeParams::new(n, sets)?;
        if args.method != Method::Thm3 {
            scheme::derive(&params).require_sigma()?;
        }
        plans.push(params);
    }
    if plans.len() < 3 {
        return Err(Error::Domain(format!("a convergence sweep needs at least 3 values of N, got {}", plans.len())));
    }
    let correction: Thm4Correction = args.thm4_correction.into();
    let mut rows: Vec<SweepRow> = Vec::new();
    for params in &plans {
        let pmf = exact::exact_pmf(params)?;
        let expansion = match args.method {
            Method::Thm2 | Method::Thm4 => Some(Expansion::new(params, ExpansionOptions::default())?),
            _ => None,
        };
        let report = run_method(args.method, params, &pmf, expansion.as_ref(), correction)?;
        rows.push(SweepRow { n: params.cells(), sets: params.sets().to_vec(), sup_error: report.sup_error, slope_so_far: None });
        if rows.len() >= 3 {
            let pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.sup_error)).collect();
            rows.last_mut().unwrap().slope_so_far = Some(edgeworth::sup_error_slope(&pts)?);
        }
    }
    let slope = rows.last().and_then(|r| r.slope_so_far).expect("at least three rows");
    let pass = slope >= args.slope_min && slope <= args.slope_max;
    let params = json!({ "p": proportions.iter().map(ToString::to_string).collect::<Vec<_>>(), "N": cells });
    let options = json!({
        "method": args.method,
        "thm4_correction": correction,
        "slope_window": [args.slope_min, args.slope_max],
    });
    let artifact = match format {
        Format::Csv => Artifact::Csv(ser::sweep_csv(&rows)),
        Format::Json => Artifact::Json(json!({
            "rows": rows.iter().map(|r| json!({
                "N": r.n,
                "sets": r.sets,
                "sup_error": ser::round_sig(r.sup_error),
                "slope_so_far": r.slope_so_far.map(ser::round_sig),
            })).collect::<Vec<_>>(),
            "slope": ser::round_sig(slope),
            "pass": pass,
        })),
    };
    Ok((params, options, artifact))
}

fn cmd_bartlett(args: &BartlettArgs, format: Format) -> Result<(Value, Value, Artifact), Error> {
    let params = args.scheme.params()?;
    let quad = QuadratureSpec { panels: args.panels, nodes: args.nodes, tolerance: args.tol, max_panels: args.max_panels };
    let rows = bartlett::verify(&params, &args.ts, &quad)?;
    let pass = rows.iter().all(|r| r.abs_diff <= args.tol);
    let options = json!({ "t": args.ts, "quadrature": quad });
    let artifact = match format {
        Format::Csv => Artifact::Csv(ser::bartlett_csv(&rows)),
        Format::Json => Artifact::Json(json!({ "rows": ser::bartlett_json(&rows), "pass": pass })),
    };
    Ok((scheme_json(&params), options, artifact))
}

fn cmd_simulate(args: &SimulateArgs, format: Format) -> Result<(Value, Value, Artifact), Error> {
    let params = args.scheme.params()?;
    let config = SimConfig::new(params.clone(), args.trials, args.seed)?;
    let emp = simulate::empirical_pmf(&config);
    let options = json!({ "trials": args.trials, "seed": args.seed, "exact": args.exact });
    let artifact = match format {
        Format::Csv => Artifact::Csv(ser::empirical_csv(&emp)),
        Format::Json => {
            let mut body = ser::empirical_json(&emp);
            let derived = scheme::derive(&params);
            body["exact_mean"] = json!(ser::rational_string(&derived.mean_mu0));
            if let Ok((mean, half)) = simulate::mc_mean_ci(&emp) {
                body["mean"] = json!(ser::round_sig(mean));
                body["ci_half_width"] = json!(ser::round_sig(half));
            }
            if args.exact {
                let pmf = exact::exact_pmf(&params)?;
                body["total_variation"] = json!(ser::round_sig(total_variation(&pmf, &emp.frequencies())));
            }
            Artifact::Json(body)
        }
    };
    Ok((scheme_json(&params), options, artifact))
}

fn run(cli: &Cli) -> Result<(), Error> {
    precision::set_working(cli.precision)?;
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }
    let (command, result) = match &cli.command {
        Command::Exact(a) => ("exact", cmd_exact(a, cli.format)),
        Command::Compare(a) => ("compare", cmd_compare(a, cli.format)),
        Command::Convergence(a) => ("convergence", cmd_convergence(a, cli.format)),
        Command::Bartlett(a) => ("bartlett", cmd_bartlett(a, cli.format)),
        Command::Simulate(a) => ("simulate", cmd_simulate(a, cli.format)),
    };
    let (params, options, artifact) = result?;
    let timestamp = cli.timestamp.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let manifest = Manifest { command, params, options, timestamp, precision: cli.precision };
    emit(&manifest, artifact).map_err(|e| Error::Domain(format!("writing output: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions() {
        assert_eq!(parse_proportion("0.3").unwrap(), Rational::from((3, 10)));
        assert_eq!(parse_proportion(".5").unwrap(), Rational::from((1, 2)));
        assert_eq!(parse_proportion("3/10").unwrap(), Rational::from((3, 10)));
        assert_eq!(parse_proportion("1").unwrap(), Rational::from(1));
        assert!(parse_proportion("0.3x").is_err());
        assert!(parse_proportion(".").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
