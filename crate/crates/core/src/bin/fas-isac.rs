use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fas_isac::baselines::Scheme;
use fas_isac::checks::{self, InstanceSpec};
use fas_isac::harness::{generate_scenario, run_scheme, run_sweep_with_threads, write_records, write_summary, ExperimentConfig};
use fas_isac::model::{scnr, Environment};
use fas_isac::solver::solve;
use fas_isac::Error;

/// Region used by `demo` when no config is given.
const DEMO_REGION_WAVELENGTHS: f64 = 2.0;

/// The full-scale scenario at one region size. Gains are measured relative
/// to the SCNR: at -105 dBm the SCNR is near 1e14, where an absolute gain of
/// 1e-4 is below one ulp and the loops would only stop at their caps.
fn demo_default() -> ExperimentConfig {
    let mut d = ExperimentConfig::full_scale();
    d.geometry.region_wavelengths = vec![DEMO_REGION_WAVELENGTHS];
    d.solver.relative = true;
    d
}

#[derive(Parser)]
#[command(name = "fas-isac", version, about = "Radar SCNR maximization with fluid receive antennas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file and write CSV records.
    Run(Common),
    /// Solve one scenario and print the optimization trace.
    Demo(Common),
    /// Numerical self-checks on small random instances.
    Check(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = one per core). Overrides `THREADS` and the config.
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidGeometry(_) | Error::InvalidScenario(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Run(c) => run(&c),
        Command::Demo(c) => demo(&c),
        Command::Check(c) => check(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(c: &Common, fallback: impl FnOnce() -> ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    let mut config = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { path, source } => Failure::Config(format!("cannot read config {}: {source}", path.display())),
            other => other.into(),
        })?,
        None => fallback(),
    };
    if let Some(seed) = c.seed {
        config.run.seed = seed;
    }
    if let Some(trials) = c.trials {
        config.run.trials = trials;
    }
    if let Some(out) = &c.out {
        config.run.output = Some(out.clone());
    }
    config.run.threads = thread_count(c, config.run.threads)?;
    config.validate()?;
    Ok(config)
}

fn thread_count(c: &Common, from_config: usize) -> Result<usize, Failure> {
    if let Some(t) = c.threads {
        return Ok(t);
    }
    match std::env::var("THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("THREADS: expected a non-negative integer, got {v:?}"))),
        Err(_) => Ok(from_config),
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
        .map(|pool| pool.install(f))
}

fn run(c: &Common) -> Result<(), Failure> {
    if c.config.is_none() {
        return Err(Failure::Config("run needs --config <path>".into()));
    };
    let config = load_config(c, ExperimentConfig::full_scale)?;
    let out = config
        .run
        .output
        .clone()
        .ok_or_else(|| Failure::Config("no output path: pass --out or set run.output".into()))?;
    let records = run_sweep_with_threads(&config, config.run.threads)?;
    write_records(&records, &out)?;
    let mut stdout = std::io::stdout().lock();
    write_summary(&records, &mut stdout).map_err(|e| Failure::Runtime(e.to_string()))?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("{} records written to {} ({failed} failed runs)", records.len(), out.display());
    Ok(())
}

fn demo(c: &Common) -> Result<(), Failure> {
    let config = load_config(c, demo_default)?;
    let text = with_pool(config.run.threads, || demo_report(&config))??;
    print!("{text}");
    Ok(())
}

/// Everything `demo` prints. Contains no timings, so it is a pure function
/// of the config.
fn demo_report(config: &ExperimentConfig) -> Result<String, Failure> {
    let point = config.sweep_points()[0];
    let geom = config.geometry_for(point.region_wavelengths)?;
    let scenario = generate_scenario(config, &point, 0);
    let solver = config.solver_config(config.run.seed);
    let lambda = geom.wavelength();
    let mut s = String::new();
    let p = &config.population;
    let _ = writeln!(
        s,
        "scenario: M={} ({}x{}) N={} K={} L={} I={} A/lambda={} P0={} W gamma={} seed={}",
        geom.tx_count(),
        geom.tx_x(),
        geom.tx_y(),
        geom.rx_count(),
        p.users,
        p.paths,
        p.clutter,
        point.region_wavelengths,
        point.power_budget,
        point.sinr_target,
        config.run.seed
    );
    let sol = solve(&scenario, &geom, &solver)?;
    let _ = writeln!(s, "\nfas trace");
    let _ = writeln!(s, "{:>5}  {:>12}  {:>12}  {:>10}  {:>16}", "outer", "scnr_db", "min_sinr", "power", "min_dist/lambda");
    for (i, r) in sol.trace.outer.iter().enumerate() {
        let min_sinr = r.sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "{i:>5}  {:>12.6}  {:>12.6}  {:>10.6}  {:>16.6}",
            10.0 * r.scnr.log10(),
            min_sinr,
            r.power,
            r.min_distance / lambda
        );
    }
    let _ = writeln!(
        s,
        "status: {:?} after {} outer iterations ({} precoder, {} position steps)",
        sol.trace.status,
        sol.trace.outer_iterations(),
        sol.trace.precoder_iterations,
        sol.trace.position_iterations
    );
    let _ = writeln!(s, "positions / lambda:");
    for (n, r) in sol.positions.points().iter().enumerate() {
        let _ = writeln!(s, "  r{n} = ({:.6}, {:.6})", r.x / lambda, r.y / lambda);
    }
    let env = Environment::new(&scenario, &geom);
    let check = scnr(&sol.precoder, &sol.positions, &scenario, &geom);
    let _ = writeln!(s, "final scnr_db {:.6} (recomputed {:.6})", 10.0 * sol.trace.final_scnr().log10(), 10.0 * check.log10());
    let _ = writeln!(s, "user sinr: {}", env.sinrs(sol.precoder.matrix()).iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "));

    let _ = writeln!(s, "\nbaselines");
    let _ = writeln!(s, "{:<6}  {:>12}  {:>10}  {:>9}", "scheme", "scnr_db", "iterations", "converged");
    for scheme in [Scheme::Aps, Scheme::Rula, Scheme::Fpa] {
        match run_scheme(scheme, &scenario, &geom, &solver) {
            Ok(r) => {
                let _ = writeln!(s, "{:<6}  {:>12.6}  {:>10}  {:>9}", scheme.name(), 10.0 * r.scnr.log10(), r.iterations, r.converged);
            }
            Err(e) => {
                let _ = writeln!(s, "{:<6}  failed: {e}", scheme.name());
            }
        }
    }
    Ok(s)
}

fn check(c: &Common) -> Result<(), Failure> {
    let seed = c.seed.unwrap_or(0);
    let threads = thread_count(c, 0)?;
    let failures = with_pool(threads, || run_checks(seed))?;
    if failures > 0 {
        return Err(Failure::Runtime(format!("{failures} check(s) failed")));
    }
    Ok(())
}

/// Runs the property checks sequentially and prints one line per check.
/// Returns the number of failed checks.
fn run_checks(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut report = |name: &str, worst: f64, ok: bool, detail: &str| {
        println!("{} {name:<28} worst {worst:.3e}  {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    let instances: Vec<_> = (0..10)
        .filter_map(|_| checks::random_instance(&InstanceSpec::small(), &mut rng).ok())
        .collect();

    let worst = instances.iter().map(checks::precoder_tangency_gap).fold(0.0, f64::max);
    report("precoder tangency", worst, worst <= 1e-8, "(tol 1e-8 rel, 10 instances)");
    let worst = instances.iter().map(checks::position_tangency_gap).fold(0.0, f64::max);
    report("position tangency", worst, worst <= 1e-8, "(tol 1e-8 rel, 10 instances)");
    let worst = instances
        .iter()
        .map(|i| checks::precoder_majorization_excess(i, 200, &mut rng))
        .fold(f64::NEG_INFINITY, f64::max);
    report("precoder minorization", worst, worst <= 1e-8, "(tol 1e-8, 200 samples each)");
    let worst = instances
        .iter()
        .map(|i| checks::position_majorization_excess(i, 200, &mut rng))
        .fold(f64::NEG_INFINITY, f64::max);
    report("position minorization", worst, worst <= 1e-8, "(tol 1e-8, 200 samples each)");
    let worst = instances
        .iter()
        .flat_map(|i| (0..10).map(|_| checks::gradient_error(i, &mut rng)).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    report("q gradient", worst, worst <= 1e-5, "(tol 1e-5 rel, 100 points)");
    let worst = instances
        .iter()
        .map(|i| checks::hessian_ratio(i, 20, &mut rng))
        .fold(0.0, f64::max);
    report("delta curvature bound", worst, worst <= 1.0 + 1e-6, "(|eig H| / delta <= 1 + 1e-6)");

    let mut excess = f64::NEG_INFINITY;
    let mut kkt: f64 = 0.0;
    let mut qcqp_error = None;
    for _ in 0..5 {
        match checks::random_instance(&InstanceSpec::tiny(), &mut rng).and_then(|i| checks::qcqp_oracle(&i, 2000, 1e-10, &mut rng)) {
            Ok(o) => {
                excess = excess.max(o.excess);
                kkt = kkt.max(o.kkt_residual);
            }
            Err(e) => qcqp_error = Some(e.to_string()),
        }
    }
    let ok = qcqp_error.is_none() && excess <= 1e-8 && kkt <= 1e-6;
    report(
        "qcqp sampling oracle",
        excess,
        ok,
        &qcqp_error.unwrap_or_else(|| format!("(kkt {kkt:.1e} <= 1e-6, 5 instances)")),
    );
    match checks::scalar_power_gap(2.0, 1.0) {
        Ok(gap) => report("scalar qcqp uses budget", gap, gap <= 1e-9, "(tol 1e-9 rel)"),
        Err(e) => report("scalar qcqp uses budget", f64::NAN, false, &e.to_string()),
    }
    failures
}
