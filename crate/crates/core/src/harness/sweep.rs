//! Monte-Carlo sweeps and their CSV records.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{run_aps, run_fpa, run_rula, BaselineResult, Scheme};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, SweepPoint};
use crate::harness::scenario::{derived_seed, draw_scenario, trial_rng};
use crate::model::{ArrayGeometry, Positions, Precoder, Scenario};
use crate::solver::{check_constraints, solve, SolverConfig, Status};

pub const CSV_HEADER: [&str; 10] = [
    "scheme",
    "sweep_var",
    "sweep_value",
    "trial",
    "seed",
    "scnr_db",
    "scnr_linear",
    "converged",
    "iterations",
    "ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub scheme: Scheme,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// Linear SCNR; NaN when the run failed.
    pub scnr: f64,
    pub converged: bool,
    pub iterations: usize,
    pub ms: f64,
    /// Largest constraint residual, each normalized by its bound
    /// (`<= 0` when feasible); NaN when the run failed.
    pub max_residual: f64,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn scnr_db(&self) -> f64 {
        10.0 * self.scnr.log10()
    }
}

/// Outcome of one scheme on one scenario.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub precoder: Precoder,
    pub positions: Positions,
    pub scnr: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn run_scheme(scheme: Scheme, scenario: &Scenario, geom: &ArrayGeometry, config: &SolverConfig) -> Result<SchemeRun> {
    let from_baseline = |r: BaselineResult| SchemeRun {
        precoder: r.precoder,
        positions: r.positions,
        scnr: r.scnr,
        converged: r.converged,
        iterations: r.iterations,
    };
    match scheme {
        Scheme::Fas => {
            let sol = solve(scenario, geom, config)?;
            if sol.trace.status == Status::Infeasible {
                return Err(Error::Infeasible("no feasible starting precoder".into()));
            }
            Ok(SchemeRun {
                scnr: sol.trace.final_scnr(),
                converged: sol.trace.status == Status::Converged,
                iterations: sol.trace.outer_iterations(),
                precoder: sol.precoder,
                positions: sol.positions,
            })
        }
        Scheme::Aps => run_aps(scenario, geom, config).map(from_baseline),
        Scheme::Rula => run_rula(scenario, geom, config).map(from_baseline),
        Scheme::Fpa => run_fpa(scenario, geom, config).map(from_baseline),
    }
}

/// Largest constraint residual normalized by its bound.
pub fn max_normalized_residual(run: &SchemeRun, scenario: &Scenario, geom: &ArrayGeometry) -> f64 {
    let r = check_constraints(&run.precoder, &run.positions, scenario, geom);
    let mut worst = r.power / scenario.power_budget;
    for (res, u) in r.sinr.iter().zip(&scenario.users) {
        worst = worst.max(res / u.sinr_target);
    }
    for res in &r.distance {
        worst = worst.max(res / geom.min_distance());
    }
    worst.max(r.region / geom.region_side().max(geom.min_distance()))
}

/// Every `(scheme, sweep point, trial)` cell of the experiment, ordered by
/// scheme (as listed in the config), then point, then trial. Cells run on
/// the current rayon pool; failures are recorded, never raised.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let points = config.sweep_points();
    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..config.run.trials).map(move |t| (p, t)))
        .collect();
    let mut records: Vec<(usize, usize, usize, SweepRecord)> = cells
        .par_iter()
        .flat_map_iter(|&(p, t)| run_cell(config, &points[p], t).into_iter().enumerate().map(move |(s, r)| (s, p, t, r)))
        .collect();
    records.sort_by_key(|(s, p, t, _)| (*s, *p, *t));
    Ok(records.into_iter().map(|(.., r)| r).collect())
}

/// All configured schemes on the one scenario of `(point, trial)`.
pub fn run_cell(config: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Vec<SweepRecord> {
    let seed = derived_seed(config.run.seed, trial);
    let draw = draw_scenario(&config.population, &mut trial_rng(config.run.seed, trial));
    let scenario = draw.scenario(&config.population, point);
    let geom = config.geometry_for(point.region_wavelengths);
    let solver = config.solver_config(seed);
    config
        .run
        .schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let outcome = geom
                .as_ref()
                .map_err(|e| Error::InvalidGeometry(e.to_string()))
                .and_then(|g| run_scheme(scheme, &scenario, g, &solver).map(|r| (g, r)));
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let mut record = SweepRecord {
                scheme,
                sweep_var: config.run.sweep.name().to_string(),
                sweep_value: point.value,
                trial,
                seed,
                scnr: f64::NAN,
                converged: false,
                iterations: 0,
                ms,
                max_residual: f64::NAN,
                error: None,
            };
            match outcome {
                Ok((g, run)) => {
                    record.max_residual = max_normalized_residual(&run, &scenario, g);
                    record.scnr = run.scnr;
                    record.converged = run.converged;
                    record.iterations = run.iterations;
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            record
        })
        .collect()
}

/// Runs [`run_sweep`] on a dedicated pool of `threads` workers (0 = one per
/// core). Output order does not depend on the pool size.
pub fn run_sweep_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Vec<SweepRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(config))
}

/// CSV with the fixed header. Reals use the shortest representation that
/// parses back to the same bits.
pub fn write_records(records: &[SweepRecord], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        writer
            .write_record([
                r.scheme.name().to_string(),
                r.sweep_var.clone(),
                r.sweep_value.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.scnr_db().to_string(),
                r.scnr.to_string(),
                r.converged.to_string(),
                r.iterations.to_string(),
                r.ms.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads back the columns written by [`write_records`]. The residual and
/// error fields are not stored and come back as NaN / `None`.
pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let bad = |what: &str, row: usize| Error::Config(format!("{}: row {row}: bad {what}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let scheme = Scheme::ALL
            .into_iter()
            .find(|s| s.name() == &rec[0])
            .ok_or_else(|| bad("scheme", row))?;
        out.push(SweepRecord {
            scheme,
            sweep_var: rec[1].to_string(),
            sweep_value: rec[2].parse().map_err(|_| bad("sweep_value", row))?,
            trial: rec[3].parse().map_err(|_| bad("trial", row))?,
            seed: rec[4].parse().map_err(|_| bad("seed", row))?,
            scnr: rec[6].parse().map_err(|_| bad("scnr_linear", row))?,
            converged: rec[7].parse().map_err(|_| bad("converged", row))?,
            iterations: rec[8].parse().map_err(|_| bad("iterations", row))?,
            ms: rec[9].parse().map_err(|_| bad("ms", row))?,
            max_residual: f64::NAN,
            error: None,
        });
    }
    Ok(out)
}

/// Writes a per-scheme, per-point summary (mean SCNR in dB over successful
/// trials) to `out`.
pub fn write_summary(records: &[SweepRecord], out: &mut impl Write) -> std::io::Result<()> {
    let mut keys: Vec<(Scheme, u64)> = records.iter().map(|r| (r.scheme, r.sweep_value.to_bits())).collect();
    keys.dedup();
    writeln!(out, "scheme  {:>10}  mean_scnr_db  ok/trials", "value")?;
    for (scheme, bits) in keys {
        let cell: Vec<&SweepRecord> = records
            .iter()
            .filter(|r| r.scheme == scheme && r.sweep_value.to_bits() == bits)
            .collect();
        let ok: Vec<f64> = cell.iter().filter(|r| r.error.is_none()).map(|r| r.scnr).collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        writeln!(
            out,
            "{:<6}  {:>10}  {:>12.4}  {}/{}",
            scheme.name(),
            f64::from_bits(bits),
            10.0 * mean.log10(),
            ok.len(),
            cell.len()
        )?;
    }
    Ok(())
}
