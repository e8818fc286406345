use fas_isac::baselines::{aps_nodes, rula_positions, run_aps, run_fpa, run_rula, Scheme};
use fas_isac::checks::{self, InstanceSpec};
use fas_isac::error::Error;
use fas_isac::model::ArrayGeometry;
use fas_isac::solver::{check_constraints, solve_from, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> SolverConfig {
    SolverConfig {
        relative: true,
        position_backtracking: true,
        ..SolverConfig::default()
    }
}

fn spec() -> InstanceSpec {
    InstanceSpec {
        rx_count: 4,
        ..InstanceSpec::small()
    }
}

#[test]
fn rula_array_is_a_centered_segment_with_spacing_d() {
    let geom = ArrayGeometry::new(2, 2, 0.5, 4, 3.0, 0.5, 1.0).unwrap();
    for angle in [0.0, 0.4, 1.3, 2.9] {
        let p = rula_positions(&geom, angle);
        let centroid = p.points().iter().sum::<nalgebra::Vector2<f64>>() / 4.0;
        assert!((centroid - nalgebra::Vector2::new(1.5, 1.5)).norm() < 1e-12);
        for pair in p.points().windows(2) {
            assert!(((pair[1] - pair[0]).norm() - 0.5).abs() < 1e-12);
        }
        assert!(p.feasible(&geom));
    }
}

#[test]
fn rula_without_a_fitting_angle_fails() {
    // Four antennas at D = 0.5 span 1.5, longer than the 1 x 1 diagonal.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = checks::random_instance(
        &InstanceSpec {
            region_wavelengths: 1.0,
            ..spec()
        },
        &mut rng,
    )
    .unwrap();
    let err = run_rula(&inst.scenario, &inst.geometry, &config()).unwrap_err();
    assert!(matches!(err, Error::NoFeasibleAngle));
}

#[test]
fn aps_lattice_covers_the_region() {
    let geom = ArrayGeometry::new(2, 2, 0.5, 4, 2.0, 0.5, 1.0).unwrap();
    let nodes = aps_nodes(&geom);
    assert_eq!(nodes.len(), 25);
    assert!(nodes.iter().all(|n| n.x >= 0.0 && n.y >= 0.0 && n.x <= 2.0 && n.y <= 2.0));
}

/// Every baseline output satisfies the problem constraints, and the main
/// solver started from it never ends lower.
#[test]
fn baselines_are_feasible_and_warm_starts_never_lose() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = config();
    for _ in 0..4 {
        let inst = checks::random_instance(&spec(), &mut rng).unwrap();
        let (s, g) = (&inst.scenario, &inst.geometry);
        let runs = [run_fpa(s, g, &cfg).unwrap(), run_rula(s, g, &cfg).unwrap(), run_aps(s, g, &cfg).unwrap()];
        for base in runs {
            let report = check_constraints(&base.precoder, &base.positions, s, g);
            assert!(report.satisfied(s, g, 1e-6, 1e-9, 0.0), "{}: {report:?}", base.scheme);
            let sol = solve_from(s, g, &base.precoder, &base.positions, &cfg).unwrap();
            assert!(sol.trace.final_scnr() >= base.scnr, "{}", base.scheme);
        }
    }
}

#[test]
fn fpa_keeps_the_planar_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let inst = checks::random_instance(&spec(), &mut rng).unwrap();
    let fpa = run_fpa(&inst.scenario, &inst.geometry, &config()).unwrap();
    assert_eq!(fpa.scheme, Scheme::Fpa);
    assert_eq!(fpa.positions, inst.geometry.centered_grid());
}

#[test]
fn aps_positions_stay_on_the_lattice() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inst = checks::random_instance(&spec(), &mut rng).unwrap();
    let aps = run_aps(&inst.scenario, &inst.geometry, &config()).unwrap();
    let nodes = aps_nodes(&inst.geometry);
    for p in aps.positions.points() {
        assert!(nodes.iter().any(|n| (n - p).norm() < 1e-12), "{p}");
    }
    let fpa = run_fpa(&inst.scenario, &inst.geometry, &config()).unwrap();
    assert!(aps.scnr.is_finite() && fpa.scnr.is_finite());
}
