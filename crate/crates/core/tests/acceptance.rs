//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.
//!
//! Desk scale is `configs/desk_region.toml` and its siblings: M = 16, N = 4,
//! K = 2, I = 4, relative thresholds, adaptive position steps.

use std::collections::HashMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fas_isac::baselines::{run_aps, run_fpa, run_rula, Scheme};
use fas_isac::checks::{self, InstanceSpec};
use fas_isac::harness::{generate_scenario, run_sweep, ExperimentConfig, SweepRecord};
use fas_isac::model::{CMatrix, Environment, Positions};
use fas_isac::position::{optimize_positions, PositionOptions};
use fas_isac::precoder::{initial_precoder, Threshold};
use fas_isac::solver::{check_constraints, solve, solve_from, SolverConfig, Status};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DESK_REGION: &str = include_str!("../../../configs/desk_region.toml");
const DESK_POWER: &str = include_str!("../../../configs/desk_power.toml");
const DESK_GAMMA: &str = include_str!("../../../configs/desk_gamma.toml");

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn small_instances(count: usize, spec: &InstanceSpec, rng: &mut ChaCha8Rng) -> Result<Vec<checks::Instance>, fas_isac::Error> {
    (0..count).map(|_| checks::random_instance(spec, rng)).collect()
}

fn desk(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("desk config parses")
}

fn desk_at(region: f64, schemes: Vec<Scheme>) -> ExperimentConfig {
    let mut config = desk(DESK_REGION);
    config.geometry.region_wavelengths = vec![region];
    config.run.schemes = schemes;
    config
}

fn tangency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let instances = match small_instances(100, &InstanceSpec::small(), &mut rng) {
        Ok(i) => i,
        Err(e) => return Outcome::error(e),
    };
    let w = max(instances.iter().map(checks::precoder_tangency_gap));
    let r = max(instances.iter().map(checks::position_tangency_gap));
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        w <= 1e-8 && r <= 1e-8 && secs < 10.0,
        format!("100 instances: W gap {w:.2e}, r gap {r:.2e} (<= 1e-8 max(1,SCNR)); {secs:.2}s (< 10s)"),
    )
}

fn majorization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let instances = match small_instances(20, &InstanceSpec::small(), &mut rng) {
        Ok(i) => i,
        Err(e) => return Outcome::error(e),
    };
    let w = max(instances.iter().map(|i| checks::precoder_majorization_excess(i, 1000, &mut rng)));
    let q = max(instances.iter().map(|i| checks::position_majorization_excess(i, 1000, &mut rng)));
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        w <= 1e-8 && q <= 1e-8 && secs < 30.0,
        format!("20 x 1000 samples: W excess {w:.2e}, q minorant excess {q:.2e} (<= 1e-8 scale); {secs:.2}s (< 30s)"),
    )
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let instances = match small_instances(20, &InstanceSpec::small(), &mut rng) {
        Ok(i) => i,
        Err(e) => return Outcome::error(e),
    };
    let worst = max(instances.iter().flat_map(|i| (0..10).map(|_| checks::gradient_error(i, &mut rng)).collect::<Vec<_>>()));
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-5 && secs < 5.0,
        format!("200 points: worst relative error {worst:.2e} (<= 1e-5); {secs:.2}s (< 5s)"),
    )
}

fn curvature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let instances = match small_instances(10, &InstanceSpec::small(), &mut rng) {
        Ok(i) => i,
        Err(e) => return Outcome::error(e),
    };
    let worst = max(instances.iter().map(|i| checks::hessian_ratio(i, 100, &mut rng)));
    Outcome::new(
        worst <= 1.0 + 1e-6,
        format!("10 x 100 points: max |eig H| / delta_n = {worst:.6} (<= 1 + 1e-6)"),
    )
}

fn monotone_convergence() -> Outcome {
    let config = desk_at(2.0, vec![Scheme::Fas]);
    let point = config.sweep_points()[0];
    let geom = config.geometry_for(point.region_wavelengths).expect("desk geometry");
    let solver = config.solver_config(config.run.seed);
    let (mut monotone, mut converged, mut feasible) = (0, 0, 0);
    let mut notes = Vec::new();
    for trial in 0..50 {
        let scenario = generate_scenario(&config, &point, trial);
        let sol = match solve(&scenario, &geom, &solver) {
            Ok(s) => s,
            Err(e) => {
                notes.push(format!("trial {trial}: {e}"));
                continue;
            }
        };
        monotone += sol.trace.is_monotone(1e-9) as usize;
        if sol.trace.status == Status::Converged {
            converged += 1;
        } else {
            notes.push(format!("trial {trial}: {:?} after {} rounds", sol.trace.status, sol.trace.outer_iterations()));
        }
        let report = check_constraints(&sol.precoder, &sol.positions, &scenario, &geom);
        feasible += report.satisfied(&scenario, &geom, 1e-6, 1e-9, 0.0) as usize;
    }
    let mut detail = format!("50 trials at A = 2: monotone {monotone}/50, converged {converged}/50, feasible {feasible}/50");
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    Outcome::new(monotone == 50 && converged == 50 && feasible == 50, detail)
}

fn qcqp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut excess, mut kkt, mut samples) = (f64::NEG_INFINITY, 0.0f64, 0);
    for _ in 0..20 {
        match checks::random_instance(&InstanceSpec::tiny(), &mut rng).and_then(|i| checks::qcqp_oracle(&i, 10_000, 1e-10, &mut rng)) {
            Ok(o) => {
                excess = excess.max(o.excess);
                kkt = kkt.max(o.kkt_residual);
                samples += o.feasible_samples;
            }
            Err(e) => return Outcome::error(e),
        }
    }
    let scalar = match checks::scalar_power_gap(1.0, 1.0) {
        Ok(g) => g,
        Err(e) => return Outcome::error(e),
    };
    Outcome::new(
        excess <= 1e-8 && kkt <= 1e-6 && scalar <= 1e-9,
        format!(
            "20 tiny instances, {samples} feasible samples: excess {excess:.2e} (<= 1e-8), KKT {kkt:.2e} (<= 1e-6); scalar | |w|^2 - P0 | / P0 = {scalar:.2e} (<= 1e-9)"
        ),
    )
}

fn clutter_free() -> Outcome {
    let spec = InstanceSpec {
        tx_x: 4,
        tx_y: 4,
        rx_count: 4,
        users: 0,
        clutter: 0,
        ..InstanceSpec::small()
    };
    let solver = SolverConfig {
        relative: true,
        position_backtracking: true,
        ..SolverConfig::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let inst = match checks::random_instance(&spec, &mut rng) {
            Ok(i) => i,
            Err(e) => return Outcome::error(e),
        };
        let s = &inst.scenario;
        let expected = s.power_budget * 16.0 * 4.0 * s.target.coefficient.norm_sqr() / s.radar_noise_power;
        match solve(s, &inst.geometry, &solver) {
            Ok(sol) => worst = worst.max((sol.trace.final_scnr() - expected).abs() / expected),
            Err(e) => return Outcome::error(e),
        }
    }
    Outcome::new(worst <= 1e-3, format!("10 seeds: worst relative gap to P0 M N |a0|^2 / s0^2 = {worst:.2e} (<= 1e-3)"))
}

fn position_oracle() -> Outcome {
    let spec = InstanceSpec {
        tx_x: 4,
        tx_y: 4,
        rx_count: 1,
        clutter: 4,
        ..InstanceSpec::small()
    };
    let opts = PositionOptions {
        outer: Threshold::relative(1e-10),
        inner: Threshold::relative(1e-10),
        max_outer: 200,
        max_inner: 500,
        backtracking: true,
        extrapolate: false,
    };
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let inst = match checks::random_instance(&spec, &mut rng) {
            Ok(i) => i,
            Err(e) => return Outcome::error(e),
        };
        let env = Environment::new(&inst.scenario, &inst.geometry);
        let w: CMatrix = match initial_precoder(&env) {
            Ok(w) => w.into_matrix(),
            Err(e) => return Outcome::error(e),
        };
        let side = inst.geometry.region_side();
        let mut best_ms = f64::NEG_INFINITY;
        for i in 0..25 {
            let start = Positions::new(vec![Vector2::new((i % 5) as f64 + 0.5, (i / 5) as f64 + 0.5) * (side / 5.0)]);
            match optimize_positions(&w, &start, &env, &opts) {
                Ok((_, trace)) => best_ms = best_ms.max(*trace.scnr.last().unwrap()),
                Err(e) => return Outcome::error(e),
            }
        }
        let mut best_grid = f64::NEG_INFINITY;
        for ix in 0..200 {
            for iy in 0..200 {
                let p = Vector2::new(ix as f64, iy as f64) * (side / 199.0);
                best_grid = best_grid.max(env.scnr(&w, &Positions::new(vec![p])));
            }
        }
        ratios.push(best_ms / best_grid);
        wins += (best_ms >= best_grid * (1.0 - 1e-3)) as usize;
    }
    let lowest = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(
        wins >= 9,
        format!("N = 1, 25 starts vs 200x200 grid: {wins}/10 seeds within 1e-3 (>= 9); lowest ratio {lowest:.6}"),
    )
}

fn ordering() -> Outcome {
    let config = desk_at(2.0, vec![Scheme::Fas]);
    let point = config.sweep_points()[0];
    let geom = config.geometry_for(point.region_wavelengths).expect("desk geometry");
    let solver = config.solver_config(config.run.seed);
    let (mut fas_sum, mut fpa_sum, mut paired) = (0.0, 0.0, 0);
    let (mut warm_ok, mut warm_total) = (0, 0);
    let mut notes = Vec::new();
    for trial in 0..50 {
        let scenario = generate_scenario(&config, &point, trial);
        let fas = solve(&scenario, &geom, &solver);
        let fpa = run_fpa(&scenario, &geom, &solver);
        if let (Ok(fas), Ok(fpa)) = (&fas, &fpa) {
            fas_sum += fas.trace.final_scnr();
            fpa_sum += fpa.scnr;
            paired += 1;
        }
        for base in [run_aps(&scenario, &geom, &solver), run_rula(&scenario, &geom, &solver), fpa] {
            let Ok(base) = base else { continue };
            warm_total += 1;
            match solve_from(&scenario, &geom, &base.precoder, &base.positions, &solver) {
                Ok(sol) if sol.trace.final_scnr() >= base.scnr => warm_ok += 1,
                Ok(sol) => notes.push(format!("trial {trial} {}: {} < {}", base.scheme, sol.trace.final_scnr(), base.scnr)),
                Err(e) => notes.push(format!("trial {trial} {}: {e}", base.scheme)),
            }
        }
    }
    let (fas_mean, fpa_mean) = (fas_sum / paired as f64, fpa_sum / paired as f64);
    let mut detail = format!(
        "50 paired trials at A = 2: warm-started FAS >= baseline {warm_ok}/{warm_total}; mean FAS {fas_mean:.4} vs FPA {fpa_mean:.4} ({paired} pairs, margin {:.4})",
        fas_mean - fpa_mean
    );
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    Outcome::new(warm_ok == warm_total && warm_total > 0 && paired == 50 && fas_mean > fpa_mean, detail)
}

type PointKey = (u64, u64, u64);

/// Mean FAS SCNR and success count per sweep point. The three desk sweeps are
/// paired by seed and meet at (A = 2, P0 = 1, gamma = 1), so points already
/// solved by an earlier sweep are reused.
fn fas_means(
    mut config: ExperimentConfig,
    cache: &mut HashMap<PointKey, (f64, usize)>,
) -> Result<Vec<(f64, f64, usize)>, fas_isac::Error> {
    config.run.schemes = vec![Scheme::Fas];
    let mut means = Vec::new();
    for point in config.sweep_points() {
        let key = (point.region_wavelengths.to_bits(), point.power_budget.to_bits(), point.sinr_target.to_bits());
        if !cache.contains_key(&key) {
            let mut single = config.clone();
            single.geometry.region_wavelengths = vec![point.region_wavelengths];
            single.population.power_budget = vec![point.power_budget];
            single.population.sinr_target = vec![point.sinr_target];
            let records = run_sweep(&single)?;
            let ok: Vec<&SweepRecord> = records.iter().filter(|r| r.error.is_none()).collect();
            cache.insert(key, (ok.iter().map(|r| r.scnr).sum::<f64>() / ok.len() as f64, ok.len()));
        }
        let (mean, n) = cache[&key];
        means.push((point.value, mean, n));
    }
    Ok(means)
}

fn trends() -> Outcome {
    let start = Instant::now();
    let sweeps = [
        ("A/lambda", DESK_REGION, "non-decreasing"),
        ("P0", DESK_POWER, "increasing"),
        ("gamma", DESK_GAMMA, "decreasing"),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut cache = HashMap::new();
    for (name, text, want) in sweeps {
        let means = match fas_means(desk(text), &mut cache) {
            Ok(m) => m,
            Err(e) => return Outcome::error(e),
        };
        let ok = means.windows(2).all(|p| match want {
            "non-decreasing" => p[1].1 >= p[0].1,
            "increasing" => p[1].1 > p[0].1,
            _ => p[1].1 < p[0].1,
        }) && means.iter().all(|m| m.2 >= 50);
        pass &= ok;
        let cells: Vec<String> = means.iter().map(|(v, m, n)| format!("{v}:{m:.3}({n})")).collect();
        parts.push(format!("{name} {want} {} [{}]", if ok { "ok" } else { "VIOLATED" }, cells.join(" ")));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    parts.push(format!("{secs:.1}s (< 600s)"));
    Outcome::new(pass, parts.join("; "))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_fas-isac");
    let run = |threads: &str| {
        Command::new(bin)
            .args(["demo", "--seed", "7", "--threads", threads])
            .env_remove("THREADS")
            .output()
    };
    let outputs = match (run("1"), run("1"), run("8")) {
        (Ok(a), Ok(b), Ok(c)) => [a, b, c],
        (a, b, c) => {
            let e = [a.err(), b.err(), c.err()].into_iter().flatten().next().unwrap();
            return Outcome::error(e);
        }
    };
    let succeeded = outputs.iter().all(|o| o.status.success() && !o.stdout.is_empty());
    let repeat = outputs[0].stdout == outputs[1].stdout;
    let threads = outputs[0].stdout == outputs[2].stdout;
    Outcome::new(
        succeeded && repeat && threads,
        format!(
            "demo --seed 7: exit ok {succeeded}, two runs identical {repeat}, threads 1 vs 8 identical {threads} ({} bytes)",
            outputs[0].stdout.len()
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes extra arguments; only listing is honored.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("MM tangency", tangency),
        ("majorization sampling", majorization),
        ("q gradient check", gradient),
        ("delta_n curvature bound", curvature),
        ("monotone convergence", monotone_convergence),
        ("QCQP solver oracle", qcqp),
        ("clutter-free closed form", clutter_free),
        ("N = 1 position oracle", position_oracle),
        ("ordering vs baselines", ordering),
        ("trend reproduction", trends),
        ("demo determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        failed += !outcome.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
