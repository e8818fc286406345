//! Alternating optimization of precoder and antenna positions on one
//! desk-scale scenario, with the per-round trace and a constraint audit.
//!
//! cargo run --release --example solve -- [trial]

use fas_isac::harness::{generate_scenario, ExperimentConfig};
use fas_isac::solver::{check_constraints, solve};
use fas_isac::Result;

fn main() -> Result<()> {
    let trial: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_region.toml"))?;
    let point = config.sweep_points()[1];
    let scenario = generate_scenario(&config, &point, trial);
    let geom = config.geometry_for(point.region_wavelengths)?;
    let solver = config.solver_config(config.run.seed);

    let sol = solve(&scenario, &geom, &solver)?;
    println!("round   SCNR (dB)   min SINR   power (W)   min dist / lambda");
    for (i, r) in sol.trace.outer.iter().enumerate() {
        let min_sinr = r.sinr.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{i:>5}   {:>9.4}   {min_sinr:>8.4}   {:>9.6}   {:>8.4}",
            10.0 * r.scnr.log10(),
            r.power,
            r.min_distance / geom.wavelength()
        );
    }
    println!(
        "{:?} after {} rounds ({} precoder steps, {} position re-expansions)",
        sol.trace.status,
        sol.trace.outer_iterations(),
        sol.trace.precoder_iterations,
        sol.trace.position_iterations
    );
    println!("monotone: {}", sol.trace.is_monotone(1e-9));

    let report = check_constraints(&sol.precoder, &sol.positions, &scenario, &geom);
    println!("residuals (<= 0 when satisfied):");
    println!("  power  {:+.3e}", report.power);
    let sinr: Vec<String> = report.sinr.iter().map(|r| format!("{r:+.3e}")).collect();
    println!("  sinr   [{}]", sinr.join(", "));
    println!("  region {:+.3e}", report.region);
    let worst = report.distance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("  spacing (worst pair) {worst:+.3e}");
    Ok(())
}
