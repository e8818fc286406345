//! The four schemes on the same scenario: free positions (FAS), grid-restricted
//! position selection (APS), rotatable linear array (RULA) and the fixed
//! planar array (FPA). Then FAS warm-started from each baseline.
//!
//! cargo run --release --example baselines

use fas_isac::baselines::{run_aps, run_fpa, run_rula, Scheme};
use fas_isac::harness::{generate_scenario, run_scheme, ExperimentConfig};
use fas_isac::solver::solve_from;
use fas_isac::Result;

fn main() -> Result<()> {
    let config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_region.toml"))?;
    let point = config.sweep_points()[1];
    let scenario = generate_scenario(&config, &point, 4);
    let geom = config.geometry_for(point.region_wavelengths)?;
    let solver = config.solver_config(config.run.seed);

    println!("A = {} lambda", point.region_wavelengths);
    for scheme in Scheme::ALL {
        match run_scheme(scheme, &scenario, &geom, &solver) {
            Ok(run) => println!("{scheme:>5}  {:>8.4} dB  converged {}", 10.0 * run.scnr.log10(), run.converged),
            Err(e) => println!("{scheme:>5}  failed: {e}"),
        }
    }

    println!("\nFAS started from each baseline's solution:");
    let starts = [run_aps(&scenario, &geom, &solver), run_rula(&scenario, &geom, &solver), run_fpa(&scenario, &geom, &solver)];
    for base in starts.into_iter().flatten() {
        let sol = solve_from(&scenario, &geom, &base.precoder, &base.positions, &solver)?;
        println!(
            "{:>5}  {:>8.4} dB -> {:>8.4} dB",
            base.scheme,
            10.0 * base.scnr.log10(),
            10.0 * sol.trace.final_scnr().log10()
        );
    }
    Ok(())
}
