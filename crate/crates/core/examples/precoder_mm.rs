//! Precoder block alone: MM iterations of the transmit precoder with the
//! receive antennas held on the planar grid.
//!
//! cargo run --release --example precoder_mm

use fas_isac::harness::{generate_scenario, ExperimentConfig};
use fas_isac::model::Environment;
use fas_isac::precoder::{initial_precoder, optimize_precoder, PrecoderExpansion, PrecoderOptions, Threshold};
use fas_isac::Result;

fn main() -> Result<()> {
    let config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_region.toml"))?;
    let point = config.sweep_points()[1];
    let scenario = generate_scenario(&config, &point, 3);
    let geom = config.geometry_for(point.region_wavelengths)?;
    let env = Environment::new(&scenario, &geom);
    let positions = geom.centered_grid();

    let w0 = initial_precoder(&env)?;
    println!("initial: power {:.4} W, SINRs {:.3?}", w0.power(), env.sinrs(w0.matrix()));

    // The surrogate touches the SCNR at its expansion point.
    let expansion = PrecoderExpansion::new(&env, w0.matrix(), &positions);
    println!(
        "SCNR {:.6}  surrogate at W_p {:.6}",
        env.scnr(w0.matrix(), &positions),
        expansion.surrogate(&env, w0.matrix(), &positions)
    );

    let opts = PrecoderOptions {
        threshold: Threshold::relative(1e-4),
        max_iterations: 100,
        qcqp_tol: 1e-10,
    };
    let (w, trace) = optimize_precoder(&w0, &env, &positions, &opts)?;
    let last = trace.scnr.len() - 1;
    for (i, value) in trace.scnr.iter().enumerate().filter(|(i, _)| i % 5 == 0 || *i == last) {
        println!("{i:>3}  SCNR {value:>12.6}  ({:.3} dB)", 10.0 * value.log10());
    }
    println!(
        "{} MM steps, {} Newton steps, converged: {}",
        trace.iterations, trace.newton_steps, trace.converged
    );
    println!("final: power {:.6} W, SINRs {:.4?}", w.power(), env.sinrs(w.matrix()));
    Ok(())
}
