//! Position block alone: with the precoder fixed, the receive antennas
//! climb the SCNR one at a time. Compares the fixed proximal step, the
//! adaptive one, and the adaptive one with extrapolation.
//!
//! cargo run --release --example position_mm

use fas_isac::harness::{generate_scenario, ExperimentConfig};
use fas_isac::model::Environment;
use fas_isac::position::{lipschitz_delta, optimize_positions, q_coefficients, q_gradient, PositionOptions};
use fas_isac::precoder::{initial_precoder, Threshold};
use fas_isac::Result;

fn main() -> Result<()> {
    let config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_region.toml"))?;
    let point = config.sweep_points()[2];
    let scenario = generate_scenario(&config, &point, 0);
    let geom = config.geometry_for(point.region_wavelengths)?;
    let env = Environment::new(&scenario, &geom);
    let w = initial_precoder(&env)?.into_matrix();
    let start = geom.centered_grid();
    let lambda = geom.wavelength();

    let coeffs = q_coefficients(&env, &w, &start);
    for n in 0..start.len() {
        let g = q_gradient(&start.get(n), n, &coeffs, &start);
        println!("antenna {n}: |grad q| {:.3e}  delta {:.3e}", g.norm(), lipschitz_delta(n, &coeffs));
    }

    for (backtracking, extrapolate) in [(false, false), (true, false), (true, true)] {
        let opts = PositionOptions {
            outer: Threshold::relative(1e-4),
            inner: Threshold::relative(1e-4),
            max_outer: 100,
            max_inner: 200,
            backtracking,
            extrapolate,
        };
        let (pos, trace) = optimize_positions(&w, &start, &env, &opts)?;
        println!(
            "\nbacktracking {backtracking}, extrapolate {extrapolate}: SCNR {:.4} -> {:.4} in {} re-expansions ({} inner steps), converged {}",
            trace.scnr[0],
            trace.scnr.last().unwrap(),
            trace.outer_iterations,
            trace.inner_iterations,
            trace.converged
        );
        for (n, p) in pos.points().iter().enumerate() {
            println!("  r_{n} = ({:.3}, {:.3}) lambda", p.x / lambda, p.y / lambda);
        }
        println!("  min distance {:.3} lambda, feasible {}", pos.min_pairwise_distance() / lambda, pos.feasible(&geom));
    }
    Ok(())
}
