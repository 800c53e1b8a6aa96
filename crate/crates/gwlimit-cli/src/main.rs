//! `gwlimit`: simulate coupled Galton-Watson processes, compute exact moments
//! and fixed points, and run the hypothesis checks and verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or domain error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwlimit::coupling::{parse_reals, CouplingModel, TabularModel, TimeGrid};
use gwlimit::diagnostics::{
    check_hmom, tightness_scan, wasserstein_contraction_test, ContractionConfig, Report, TightnessConfig,
};
use gwlimit::fixedpoint::{extinction_curve, iterate_transform, LatticeSpec, TransformConfig};
use gwlimit::forest::{simulate_paths, SimConfig};
use gwlimit::partition::{moment_system, solve_moments, Horizon, Monomial};
use gwlimit::suite::{run_criterion, SuiteReport, SuiteSize, CRITERIA, LONG_RUN_CAP};
use gwlimit::{Error, VERSION};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Serialize)]
#[command(name = "gwlimit", version, about = "Coupled Galton-Watson processes and their martingale limits")]
struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "GWLIMIT_OUT", default_value = "gwlimit-out")]
    #[serde(skip)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Simulate an ensemble of coupled paths.
    Simulate(SimulateArgs),
    /// Exact moment of a monomial at generation n or in the limit.
    Moments(MomentsArgs),
    /// Extinction probabilities.
    Extinction(ExtinctionArgs),
    /// Iterate the fixed-point equation of the Fourier transform.
    Transform(TransformArgs),
    /// Certify the moment hypotheses on random triples.
    CheckHmom(HMomArgs),
    /// Fit the tightness exponent on shrinking triples.
    Tightness(TightnessArgs),
    /// Test the Wasserstein contraction of the smoothing map.
    Contraction(ContractionArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
struct ModelArgs {
    /// binary, geometric, poisson or tabular.
    #[arg(long, default_value = "poisson")]
    model: String,
    /// Increment table for `--model tabular`.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<CouplingModel, Error> {
        if self.model.eq_ignore_ascii_case("tabular") {
            let path = self.table.as_ref().ok_or_else(|| Error::domain("--model tabular needs --table"))?;
            Ok(CouplingModel::Tabular(TabularModel::load(path)?))
        } else {
            CouplingModel::from_name(&self.model)
        }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated increasing grid.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 20)]
    gens: usize,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Population cap per grid index.
    #[arg(long, default_value_t = LONG_RUN_CAP)]
    cap: u64,
}

#[derive(Args, Serialize)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    grid: String,
    /// Monomial as `name:exponent` pairs, e.g. `W2:1,dW3:2`.
    #[arg(long)]
    target: String,
    /// Generation n.
    #[arg(long, conflicts_with = "limit")]
    gens: Option<usize>,
    /// Limit n → ∞.
    #[arg(long)]
    limit: bool,
}

#[derive(Args, Serialize)]
struct ExtinctionArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One or more comma-separated λ values.
    #[arg(long)]
    lambda: String,
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LatticeKind {
    Uniform,
    SelfSimilar,
}

#[derive(Args, Serialize)]
struct TransformArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    lattice: LatticeKind,
    #[arg(long, default_value_t = 20.0)]
    half_width: f64,
    /// Spacing of the uniform lattice.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Skip the refinement comparison.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args, Serialize)]
struct HMomArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Compact `a,b`.
    #[arg(long)]
    range: String,
    #[arg(long, default_value_t = 0.9)]
    kappa: f64,
    #[arg(long, default_value_t = 400)]
    triples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct TightnessArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    range: String,
    #[arg(long, default_value_t = 0.9)]
    kappa: f64,
    /// Horizon of the exact supremum.
    #[arg(long, default_value_t = 60)]
    gens: usize,
    /// Monte Carlo replicates for the cross-check (0 disables it).
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 4)]
    triples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct ContractionArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 100_000)]
    sample: usize,
    #[arg(long, default_value_t = 12)]
    gens: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Population cap per grid index.
    #[arg(long, default_value_t = LONG_RUN_CAP)]
    cap: u64,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// Reduced sizes.
    #[arg(long)]
    quick: bool,
    /// Run only these criteria (comma-separated ids).
    #[arg(long)]
    only: Option<String>,
}

enum Failure {
    Verification,
    Usage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    fs::create_dir_all(&cli.out)?;
    let config = json!({ "version": VERSION, "run": cli });
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cli.out, config),
        Command::Moments(a) => moments(a, &cli.out, config),
        Command::Extinction(a) => extinction(a, &cli.out, config),
        Command::Transform(a) => transform(a, &cli.out, config),
        Command::CheckHmom(a) => {
            let (lo, hi) = range(&a.range)?;
            let cert = check_hmom(&a.model.load()?, lo, hi, a.kappa, a.triples, a.seed)?;
            println!(
                "{}: C = {:.6}, C2 = {:.6}, C' = ({:.6}, {:.6}), sup E[dX3 X3^3]/dl3 = {}",
                if cert.passed { "PASS" } else { "FAIL" },
                cert.dsdity.constant,
                cert.dsdity2.constant,
                cert.easy1.constant,
                cert.easy2.constant,
                cert.easy2_linear
            );
            write_report(&cert, &cli.out, "check-hmom", config)
        }
        Command::Tightness(a) => {
            let (lo, hi) = range(&a.range)?;
            let mut cfg = TightnessConfig::new(lo, hi, a.kappa);
            cfg.generations = a.gens;
            cfg.replicates = a.reps;
            cfg.triples = a.triples;
            cfg.seed = a.seed;
            let r = tightness_scan(&a.model.load()?, &cfg)?;
            println!(
                "{}: slope {:.4} (needs {:.2}), C_W {:.6}, self-coefficient error {:.2e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.slope,
                2.0 * a.kappa,
                r.c_w,
                r.self_coefficient_max_rel_error
            );
            write_report(&r, &cli.out, "tightness", config)
        }
        Command::Contraction(a) => {
            let mut cfg = ContractionConfig::new(a.sample, a.seed);
            cfg.generations = a.gens;
            cfg.cap = a.cap;
            let r = wasserstein_contraction_test(&a.model.load()?, &TimeGrid::parse(&a.grid)?, &cfg)?;
            let ratio = r.ratio_sorted.unwrap_or(r.ratio_paired);
            println!(
                "{}: ratio {:.5} ± {:.5}, bound 1/λ₁ = {:.5}",
                if r.passed { "PASS" } else { "FAIL" },
                ratio.mean,
                ratio.se,
                r.bound
            );
            write_report(&r, &cli.out, "contraction", config)
        }
        Command::Verify(a) => verify(a, &cli.out, config),
    }
}

fn range(s: &str) -> Result<(f64, f64), Error> {
    match parse_reals(s)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(Error::domain(format!("expected a range 'a,b', got '{s}'"))),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn write_report<R: Report>(report: &R, out: &Path, name: &str, config: Value) -> CmdResult {
    write_json(&out.join(format!("{name}.json")), &json!({ "config": config, "report": report.to_json() }))?;
    let mut f = BufWriter::new(File::create(out.join(format!("{name}.csv")))?);
    report.write_csv(&mut f)?;
    f.flush()?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn simulate(a: &SimulateArgs, out: &Path, config: Value) -> CmdResult {
    let model = a.model.load()?;
    let grid = TimeGrid::parse(&a.grid)?;
    let ens = simulate_paths(&model, &grid, &SimConfig::new(a.gens, a.reps, a.seed).cap(a.cap))?;
    let mut f = BufWriter::new(File::create(out.join("ensemble.csv"))?);
    ens.write_csv(&mut f)?;
    f.flush()?;
    let n = a.gens;
    let mut summary = Vec::new();
    for (j, &l) in grid.points().iter().enumerate() {
        let w = ens.column(n, j)?;
        let mean = gwlimit::stats::batch_mean(&w);
        let extinct = ens.extinct_fraction(n, j)?;
        println!("λ = {l}: mean W_{n} = {:.6} ± {:.6}, extinct fraction {:.6}", mean.mean, mean.se, extinct.mean);
        summary.push(json!({ "lambda": l, "mean_w": mean, "extinct_fraction": extinct }));
    }
    if ens.overflow_count() > 0 {
        println!("warning: {} replicates exceeded the cap {}", ens.overflow_count(), a.cap);
    }
    let mut side = ens.sidecar(Some(config));
    side["summary"] = Value::Array(summary);
    write_json(&out.join("ensemble.json"), &side)?;
    Ok(())
}

fn moments(a: &MomentsArgs, out: &Path, config: Value) -> CmdResult {
    let model = a.model.load()?;
    let grid = TimeGrid::parse(&a.grid)?;
    let target = Monomial::parse(&a.target, grid.d())?;
    let horizon = match (a.gens, a.limit) {
        (Some(n), _) => Horizon::Generation(n),
        (None, true) => Horizon::Limit,
        (None, false) => return Err(Error::domain("give --gens N or --limit").into()),
    };
    let sys = moment_system(&model, &grid, &target)?;
    let sol = solve_moments(&sys, horizon)?;
    let rho = sol.spectral_radius.unwrap_or_else(|| sys.spectral_radius());
    println!("basis size {}", sys.len());
    println!("spectral radius {rho}");
    println!("value {}", sol.value);
    let report = json!({
        "target": target.label(),
        "horizon": horizon,
        "basis_size": sys.len(),
        "spectral_radius": rho,
        "value": sol.value,
        "system": sys.to_json(),
    });
    write_json(&out.join("moments.json"), &json!({ "config": config, "report": report }))?;
    Ok(())
}

fn extinction(a: &ExtinctionArgs, out: &Path, config: Value) -> CmdResult {
    let model = a.model.load()?;
    let curve = extinction_curve(&model, &parse_reals(&a.lambda)?, a.tol)?;
    for p in &curve.points {
        println!("{} {}", p.lambda, p.q);
    }
    let mut f = BufWriter::new(File::create(out.join("extinction.csv"))?);
    curve.write_csv(&mut f)?;
    f.flush()?;
    write_json(&out.join("extinction.json"), &json!({ "config": config, "report": curve }))?;
    Ok(())
}

fn transform(a: &TransformArgs, out: &Path, config: Value) -> CmdResult {
    let model = a.model.load()?;
    let grid = TimeGrid::parse(&a.grid)?;
    let spec = match a.lattice {
        LatticeKind::Uniform => LatticeSpec::uniform(a.half_width, a.step),
        LatticeKind::SelfSimilar => LatticeSpec::self_similar(a.half_width),
    };
    let cfg = TransformConfig::new(a.iterations).lattice(spec).refine(!a.no_refine);
    let t = iterate_transform(&model, &grid, &cfg)?;
    println!("lattice points {}", t.lattice.len());
    println!("residual {:.3e}", t.residual);
    if let Some(e) = t.refinement_error {
        println!("refinement disagreement {e:.3e}");
    }
    let mut f = BufWriter::new(File::create(out.join("transform.csv"))?);
    t.write_csv(&mut f)?;
    f.flush()?;
    write_json(&out.join("transform.json"), &json!({ "config": config, "report": t.summary_json() }))?;
    Ok(())
}

fn verify(a: &VerifyArgs, out: &Path, config: Value) -> CmdResult {
    let size = if a.quick { SuiteSize::Quick } else { SuiteSize::Full };
    let ids: Vec<usize> = match &a.only {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<usize>().ok().filter(|&i| (1..=CRITERIA.len()).contains(&i)))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::domain(format!("bad criterion list '{s}'")))?,
        None => (1..=CRITERIA.len()).collect(),
    };
    let mut criteria = Vec::new();
    for id in ids {
        let c = run_criterion(id, size)?;
        println!("{}", c.summary());
        criteria.push(c);
    }
    let passed = criteria.iter().all(|c| c.passed);
    let report = SuiteReport { version: VERSION.to_string(), size, criteria, passed };
    write_json(&out.join("verify.json"), &json!({ "config": config, "report": report }))?;
    let mut f = BufWriter::new(File::create(out.join("verify.csv"))?);
    report.write_csv(&mut f)?;
    f.flush()?;
    println!("{}", if passed { "all criteria passed" } else { "some criteria failed" });
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}
