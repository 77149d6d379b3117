//! `ancestree` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use ancestree::asg::{self, Estimate};
use ancestree::branching;
use ancestree::coeffs::{self, AncestorTable, CoefficientVector};
use ancestree::forward;
use ancestree::io::{self, McReport};
use ancestree::ldasg;
use ancestree::{Error, ErrorClass, ModelParams, Pmf};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "ancestree",
    version,
    about = "Common-ancestor type distribution of the two-type Moran model"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Population size
    #[arg(long = "N", global = true, default_value_t = 10)]
    n: usize,
    /// Selection strength
    #[arg(long, global = true, default_value_t = 1.0)]
    s: f64,
    /// Mutation rate
    #[arg(long, global = true, default_value_t = 1.0)]
    u: f64,
    /// Probability that a mutation produces type 0
    #[arg(long, global = true, default_value_t = 0.5)]
    nu0: f64,
    /// Read parameters from a JSON document instead of the flags
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Master seed for all random streams
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write the result here instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Chain {
    Moran,
    Ld,
    Asymptotic,
}

#[derive(Subcommand)]
enum Command {
    /// Derived constants: Delta, x_plus, ell_minus, ell_plus
    Derive,
    /// Coefficients a_n and probabilities h_k from the tridiagonal solve
    Exact,
    /// Large-population limit h(x), its density and ell_minus, ell_plus
    Limit {
        #[arg(long, default_value_t = 0.5)]
        x: f64,
        /// Print h and its density on a grid of this many intervals
        #[arg(long)]
        emit_grid: Option<usize>,
    },
    /// Stationary law of the Moran chain, the lookdown line count or the
    /// large-population line count
    Stationary {
        #[arg(long, value_enum, default_value_t = Chain::Ld)]
        chain: Chain,
        /// Truncation of the large-population chain; chosen automatically if absent
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// Jump path of the type-0 count
    SimulateMoran {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
    },
    /// Event log of the ancestral selection graph
    SimulateAsg {
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Sample lines, comma separated
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sample: Vec<usize>,
        /// Keep neutral arrows from outside the active set
        #[arg(long)]
        keep_relocations: bool,
    },
    /// Event log of the pruned lookdown ASG
    SimulateLdasg {
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Simulate the large-population version instead
        #[arg(long)]
        asymptotic: bool,
        #[arg(long, default_value_t = ldasg::DEFAULT_EVENT_CAP)]
        event_cap: u64,
    },
    /// Forward and ASG Monte Carlo estimates of h_k next to the exact value
    McH {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
        /// ASG horizon; a default based on s and u if absent
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Empirical tails of the number of relevant lines against a_n
    Relevant {
        #[arg(long, default_value_t = 1_000)]
        replicas: u64,
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
    },
    /// Two-type branching process summary
    Branching,
    /// RK4 solution of the frequency equation
    Ode {
        #[arg(long, default_value_t = 0.5)]
        z0: f64,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Step size; the largest accepted step if absent
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Cross-checks between the independent routes, as a pass/fail table
    Compare {
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
    },
}

/// Result of one subcommand: text for standard output and whether every
/// check passed.
struct Outcome {
    text: String,
    ok: bool,
}

impl Outcome {
    fn text(text: String) -> Self {
        Outcome { text, ok: true }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: Usage: {first}");
            return ExitCode::from(1);
        }
    };
    if let Some(threads) = std::env::var("ANCESTREE_THREADS")
        .ok()
        .and_then(|t| t.parse::<usize>().ok())
    {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(&cli) {
        Ok(out) => {
            let written = match &cli.common.output {
                Some(path) => fs::write(path, &out.text).map_err(|e| {
                    Error::InvalidArgument(format!("cannot write {}: {e}", path.display()))
                }),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            match written {
                Err(e) => fail(&e),
                Ok(()) if out.ok => ExitCode::SUCCESS,
                Ok(()) => ExitCode::from(3),
            }
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {}: {}", e.code(), e);
    ExitCode::from(match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::NumericalGuard => 2,
        ErrorClass::Invariant => 3,
    })
}

fn params(common: &Common) -> Result<ModelParams, Error> {
    match &common.input {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
            })?;
            io::params_from_json(&text)
        }
        None => ModelParams::new(common.n, common.s, common.u, common.nu0),
    }
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let c = &cli.common;
    let p = params(c)?;
    let json = c.format == Format::Json;
    let seed = c.seed;
    let doc = |v: Value| Outcome::text(format!("{}\n", io::document(&p, &v)));
    let seeded = |v: Value| Outcome::text(format!("{}\n", io::seeded_document(&p, seed, &v)));
    Ok(match &cli.command {
        Command::Derive => {
            let d = p.derive();
            if json {
                doc(json!(d))
            } else {
                Outcome::text(name_value(&[
                    ("delta", d.delta),
                    ("x_plus", d.x_plus),
                    ("ell_minus", d.ell_minus),
                    ("ell_plus", d.ell_plus),
                ]))
            }
        }
        Command::Exact => {
            let a = coefficients(&p)?;
            let h = coeffs::h_table(&p)?;
            if json {
                doc(json!({ "a": a.a, "h": h.h }))
            } else {
                Outcome::text(format!("{}\n{}", a.to_csv(), h.to_csv()))
            }
        }
        Command::Limit { x, emit_grid } => limit(&p, *x, *emit_grid, json)?,
        Command::Stationary { chain, truncation } => stationary(&p, *chain, *truncation, json)?,
        Command::SimulateMoran { k, horizon } => {
            let t = forward::simulate_moran(&p, *k, *horizon, seed)?;
            if json {
                seeded(json!(t))
            } else {
                Outcome::text(t.to_csv())
            }
        }
        Command::SimulateAsg {
            horizon,
            sample,
            keep_relocations,
        } => {
            let r = asg::simulate_asg(&p, sample, *horizon, seed, !keep_relocations)?;
            if json {
                seeded(
                    json!({ "sample": r.sample, "horizon": r.horizon, "events": r.events, "active": r.active }),
                )
            } else {
                Outcome::text(r.to_event_log())
            }
        }
        Command::SimulateLdasg {
            horizon,
            asymptotic,
            event_cap,
        } => {
            let path = if *asymptotic {
                ldasg::simulate_asymptotic_ld(&p, *horizon, seed, *event_cap)?
            } else {
                ldasg::simulate_ld(&p, *horizon, seed)?
            };
            if json {
                seeded(json!(path))
            } else {
                Outcome::text(path.to_event_log())
            }
        }
        Command::McH {
            k,
            replicas,
            horizon,
        } => {
            let exact =
                coeffs::h_table(&p)?.h.get(*k).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("k = {k} exceeds N = {}", p.n()))
                })?;
            let horizon = horizon.unwrap_or_else(|| asg::default_horizon(&p));
            let fwd = asg::estimate_h_forward(&p, *k, *replicas, seed)?;
            let bwd = asg::estimate_h_asg(&p, *k, horizon, *replicas, seed)?;
            let report = |e: Estimate, h: Option<f64>| McReport {
                params: p,
                k: *k,
                estimate: e.estimate,
                std_error: e.std_error,
                replicas: e.replicas,
                horizon: h,
            };
            if json {
                seeded(json!({
                    "k": k,
                    "exact": exact,
                    "forward": report(fwd, None),
                    "asg": report(bwd, Some(horizon)),
                }))
            } else {
                let mut out = String::from("method,k,estimate,std_error,replicas,horizon\n");
                writeln!(out, "exact,{k},{exact},0,0,").unwrap();
                writeln!(
                    out,
                    "forward,{k},{},{},{},",
                    fwd.estimate, fwd.std_error, fwd.replicas
                )
                .unwrap();
                writeln!(
                    out,
                    "asg,{k},{},{},{},{horizon}",
                    bwd.estimate, bwd.std_error, bwd.replicas
                )
                .unwrap();
                Outcome::text(out)
            }
        }
        Command::Relevant { replicas, horizon } => {
            let tails = asg::relevant_line_tails(&p, *horizon, *replicas, seed)?;
            let a = coefficients(&p)?.a;
            if json {
                let rows: Vec<Value> = tails
                    .iter()
                    .zip(&a)
                    .enumerate()
                    .map(|(n, (t, a))| json!({"n": n, "tail": t.estimate, "std_error": t.std_error, "a": a}))
                    .collect();
                seeded(json!({ "horizon": horizon, "replicas": replicas, "tails": rows }))
            } else {
                let mut out = String::from("n,tail,std_error,a\n");
                for (n, (t, a)) in tails.iter().zip(&a).enumerate() {
                    writeln!(out, "{n},{},{},{a}", t.estimate, t.std_error).unwrap();
                }
                Outcome::text(out)
            }
        }
        Command::Branching => {
            let b = branching::branching_summary(&p)?;
            if json {
                doc(json!(b))
            } else {
                let a = b.mean_matrix;
                Outcome::text(name_value(&[
                    ("a00", a[0][0]),
                    ("a01", a[0][1]),
                    ("a10", a[1][0]),
                    ("a11", a[1][1]),
                    ("lambda_plus", b.lambda_plus),
                    ("pi0", b.pi[0]),
                    ("pi1", b.pi[1]),
                    ("hbar0", b.hbar[0]),
                    ("hbar1", b.hbar[1]),
                    ("alpha0", b.alpha[0]),
                    ("alpha1", b.alpha[1]),
                ]))
            }
        }
        Command::Ode { z0, horizon, dt } => {
            let dt = dt.unwrap_or_else(|| forward::max_step(&p));
            let t = forward::ode_solve(&p, *z0, *horizon, dt)?;
            if json {
                doc(json!(t))
            } else {
                Outcome::text(t.to_csv())
            }
        }
        Command::Compare { replicas } => compare(&p, *replicas, seed, json)?,
    })
}

fn name_value(rows: &[(&str, f64)]) -> String {
    let mut out = String::from("name,value\n");
    for (k, v) in rows {
        writeln!(out, "{k},{v}").unwrap();
    }
    out
}

fn coefficients(p: &ModelParams) -> Result<CoefficientVector, Error> {
    match coeffs::solve_coefficients(p) {
        Err(Error::UseClosedForm) => coeffs::no_mutation_coefficients(p.n(), p.s()),
        other => other,
    }
}

fn limit(p: &ModelParams, x: f64, grid: Option<usize>, json: bool) -> Result<Outcome, Error> {
    let d = p.derive();
    if let Some(m) = grid {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one interval".into(),
            ));
        }
        let xs: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let h = xs
            .iter()
            .map(|&x| coeffs::limit_h(p, x))
            .collect::<Result<Vec<_>, _>>()?;
        let dens = xs
            .iter()
            .map(|&x| coeffs::limit_density(p, x))
            .collect::<Result<Vec<_>, _>>()?;
        let an: Vec<f64> = (0..=m)
            .map(|n| coeffs::limit_coefficient(p, n))
            .collect::<Result<_, _>>()?;
        if json {
            let v = json!({ "x": xs, "h": h, "density": dens, "a": an });
            return Ok(Outcome::text(format!("{}\n", io::document(p, &v))));
        }
        let mut out = String::from("x,h,density\n");
        for i in 0..=m {
            writeln!(out, "{},{},{}", xs[i], h[i], dens[i]).unwrap();
        }
        out.push_str("\nn,a\n");
        for (n, a) in an.iter().enumerate() {
            writeln!(out, "{n},{a}").unwrap();
        }
        return Ok(Outcome::text(out));
    }
    let h = coeffs::limit_h(p, x)?;
    let dens = coeffs::limit_density(p, x)?;
    if json {
        let v = json!({ "x": x, "h": h, "density": dens, "ell_minus": d.ell_minus, "ell_plus": d.ell_plus });
        return Ok(Outcome::text(format!("{}\n", io::document(p, &v))));
    }
    Ok(Outcome::text(name_value(&[
        ("x", x),
        ("h", h),
        ("density", dens),
        ("ell_minus", d.ell_minus),
        ("ell_plus", d.ell_plus),
    ])))
}

fn stationary(
    p: &ModelParams,
    chain: Chain,
    truncation: Option<usize>,
    json: bool,
) -> Result<Outcome, Error> {
    let pmf_out = |pmf: &Pmf, header: &str, extra: Value| -> Outcome {
        if json {
            let v = json!({ "offset": pmf.offset, "prob": pmf.weights, "extra": extra });
            Outcome::text(format!("{}\n", io::document(p, &v)))
        } else {
            Outcome::text(pmf.to_csv(header))
        }
    };
    Ok(match chain {
        Chain::Moran => pmf_out(&forward::stationary_moran(p)?, "k,prob", Value::Null),
        Chain::Ld => pmf_out(&ldasg::stationary_ld(p)?, "n,prob", Value::Null),
        Chain::Asymptotic => {
            let m = match truncation {
                Some(m) => m,
                None => ldasg::auto_truncation(p)?,
            };
            let (closed, solved) = ldasg::stationary_asymptotic(p, m)?;
            if json {
                let v = json!({ "truncation": m, "solved": solved.weights, "geometric": closed.weights });
                Outcome::text(format!("{}\n", io::document(p, &v)))
            } else {
                let mut out = String::from("n,prob,geometric\n");
                for (i, (s, c)) in solved.weights.iter().zip(&closed.weights).enumerate() {
                    writeln!(out, "{},{s},{c}", i + 1).unwrap();
                }
                Outcome::text(out)
            }
        }
    })
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    status: &'static str,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        status: if value < tolerance { "PASS" } else { "FAIL" },
    }
}

fn skipped(name: &'static str) -> Check {
    Check {
        name,
        value: f64::NAN,
        tolerance: f64::NAN,
        status: "SKIP",
    }
}

/// Largest population for which `compare` runs the forward Monte Carlo.
const COMPARE_MC_LIMIT: usize = 12;

fn compare(p: &ModelParams, replicas: u64, seed: u64, json: bool) -> Result<Outcome, Error> {
    let n = p.n();
    let (s, u) = (p.s(), p.u());
    let a = coefficients(p)?;
    let h = coeffs::h_table(p)?;
    let mut rows = Vec::new();

    if s > 0.0 && n > 1 {
        let rho = ldasg::stationary_ld(p)?;
        let err = (0..n)
            .map(|i| (rho.tail(i) - a.a[i]).abs())
            .fold(0.0, f64::max);
        rows.push(check("coefficients_vs_lookdown_tails", err, 1e-10));
    } else {
        rows.push(skipped("coefficients_vs_lookdown_tails"));
    }

    let recomputed: AncestorTable = coeffs::h_from_coefficients(&a.a);
    let err = recomputed
        .h
        .iter()
        .zip(&h.h)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    rows.push(check("table_from_coefficients", err, 1e-12));

    if n <= 20 {
        let back = coeffs::invert_h(&h, n)?;
        let err = back
            .a
            .iter()
            .zip(&a.a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        rows.push(check("inversion_round_trip", err, 1e-8));
    } else {
        rows.push(skipped("inversion_round_trip"));
    }

    if n <= COMPARE_MC_LIMIT && n > 1 {
        // worst standardized deviation over interior k
        let mut worst: f64 = 0.0;
        for k in 1..n {
            let e = asg::estimate_h_forward(p, k, replicas, seed.wrapping_add(k as u64))?;
            let z = if e.std_error > 0.0 {
                (e.estimate - h.h[k]).abs() / e.std_error
            } else if (e.estimate - h.h[k]).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        rows.push(check("forward_mc_max_z", worst, 4.0));
    } else {
        rows.push(skipped("forward_mc_max_z"));
    }

    if s > 0.0 && u > 0.0 {
        let m = ldasg::auto_truncation(p)?;
        let (closed, solved) = ldasg::stationary_asymptotic(p, m)?;
        rows.push(check("geometric_stationarity_tv", closed.tv(&solved), 1e-8));
        let (r1, r2) = branching::check_ratad(p)?;
        rows.push(check("branching_identity", r1.max(r2), 1e-10));
        let b = branching::branching_summary(p)?;
        let r = branching::eigen_residuals(&b);
        rows.push(check(
            "branching_eigen",
            r.left.max(r.right).max(r.root),
            1e-10,
        ));
    } else {
        rows.push(skipped("geometric_stationarity_tv"));
        rows.push(skipped("branching_identity"));
        rows.push(skipped("branching_eigen"));
    }

    let ok = rows.iter().all(|r| r.status != "FAIL");
    let text = if json {
        let v: Vec<Value> = rows
            .iter()
            .map(|r| {
                json!({
                    "check": r.name,
                    "value": finite(r.value),
                    "tolerance": finite(r.tolerance),
                    "status": r.status,
                })
            })
            .collect();
        format!(
            "{}\n",
            io::seeded_document(p, seed, &json!({ "replicas": replicas, "checks": v }))
        )
    } else {
        let mut out = String::from("check,value,tolerance,status\n");
        for r in &rows {
            if r.status == "SKIP" {
                writeln!(out, "{},,,SKIP", r.name).unwrap();
            } else {
                writeln!(
                    out,
                    "{},{:e},{:e},{}",
                    r.name, r.value, r.tolerance, r.status
                )
                .unwrap();
            }
        }
        out
    };
    Ok(Outcome { text, ok })
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
