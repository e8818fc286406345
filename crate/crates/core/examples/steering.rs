//! Array geometry, steering vectors and how the SCNR reacts when one
//! receive antenna moves.
//!
//! cargo run --example steering

use fas_isac::model::{receive_steering, scnr, transmit_steering, ArrayGeometry, CMatrix, Positions, Precoder, Scatterer, Scenario, C64};
use fas_isac::Result;
use nalgebra::Vector2;

fn main() -> Result<()> {
    // 4x4 transmitter, four receive antennas in a 2x2 wavelength square.
    let geom = ArrayGeometry::new(4, 4, 0.5, 4, 2.0, 0.5, 1.0)?;
    let grid = geom.centered_grid();
    println!("grid {:?}, rx positions (wavelengths):", geom.grid_shape());
    for p in grid.points() {
        println!("  ({:.3}, {:.3})", p.x, p.y);
    }

    let (theta, phi) = (0.6, 1.1);
    let a_t = transmit_steering(theta, phi, &geom);
    let a_r = receive_steering(theta, phi, &grid, &geom);
    println!("|a_t|^2 = {:.1} (M), |a_r|^2 = {:.1} (N)", a_t.norm_squared(), a_r.norm_squared());

    let scenario = Scenario {
        users: vec![],
        target: Scatterer { coefficient: C64::new(1.0, 0.0), elevation: theta, azimuth: phi },
        clutter: vec![
            Scatterer { coefficient: C64::new(0.8, 0.4), elevation: 0.9, azimuth: 0.5 },
            Scatterer { coefficient: C64::new(-0.5, 0.7), elevation: 0.3, azimuth: 2.2 },
        ],
        radar_noise_power: 0.1,
        power_budget: 1.0,
    };
    // Matched beam towards the target, full power.
    let beam = a_t.map(|z| z.conj()).unscale(a_t.norm());
    let w = Precoder::new(CMatrix::from_column_slice(beam.len(), 1, beam.as_slice()));
    let base = scnr(&w, &grid, &scenario, &geom);
    println!("SCNR at the grid: {:.4}", base);

    println!("moving antenna 0 along x:");
    for dx in [-0.25, -0.1, 0.1, 0.25] {
        let mut moved = grid.clone();
        moved.set(0, grid.get(0) + Vector2::new(dx, 0.0));
        let value = scnr(&w, &moved, &scenario, &geom);
        println!("  dx = {dx:+.2}  SCNR = {value:.4}  feasible = {}", moved.feasible(&geom));
    }

    let free_space = Positions::from_xy(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)]);
    println!("corners: SCNR = {:.4}", scnr(&w, &free_space, &scenario, &geom));
    Ok(())
}
