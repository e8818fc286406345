use std::collections::HashSet;

use fas_isac::baselines::Scheme;
use fas_isac::harness::scenario::{draw_scenario, trial_rng};
use fas_isac::harness::sweep::run_cell;
use fas_isac::harness::{
    dbm_to_watts, derived_seed, generate_scenario, read_records, run_sweep, run_sweep_with_threads, write_records,
    ExperimentConfig, SweepRecord, SweepVariable, CSV_HEADER,
};
use rand::RngCore;

const QUICK: &str = include_str!("../../../configs/quick.toml");

fn quick() -> ExperimentConfig {
    ExperimentConfig::from_toml(QUICK).unwrap()
}

fn record(scnr: f64) -> SweepRecord {
    SweepRecord {
        scheme: Scheme::Rula,
        sweep_var: "power_budget".into(),
        sweep_value: 0.2,
        trial: 3,
        seed: 17,
        scnr,
        converged: true,
        iterations: 12,
        ms: 1.0 / 3.0,
        max_residual: 0.0,
        error: None,
    }
}

#[test]
fn dbm_conversion_of_the_default_noise_level() {
    let w = dbm_to_watts(-105.0);
    assert!((w - 3.1623e-14).abs() < 1e-18, "{w:e}");
    assert_eq!(w, 10f64.powf(-13.5));
}

#[test]
fn shipped_configs_parse_and_validate() {
    for text in [
        QUICK,
        include_str!("../../../configs/desk_region.toml"),
        include_str!("../../../configs/desk_power.toml"),
        include_str!("../../../configs/desk_gamma.toml"),
        include_str!("../../../configs/full_scale.toml"),
    ] {
        ExperimentConfig::from_toml(text).unwrap().validate().unwrap();
    }
}

#[test]
fn sweep_points_follow_the_swept_list() {
    let text = include_str!("../../../configs/desk_power.toml");
    let config = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(config.run.sweep, SweepVariable::Power);
    let values: Vec<f64> = config.sweep_points().iter().map(|p| p.power_budget).collect();
    assert_eq!(values, vec![0.1, 0.2, 0.5, 1.0, 2.0]);
    assert!(config.sweep_points().iter().all(|p| p.region_wavelengths == 2.0 && p.sinr_target == 1.0));
}

#[test]
fn scenario_is_a_function_of_seed_and_trial() {
    let config = quick();
    let point = config.sweep_points()[0];
    assert_eq!(generate_scenario(&config, &point, 4), generate_scenario(&config, &point, 4));
    assert_ne!(generate_scenario(&config, &point, 4), generate_scenario(&config, &point, 5));
}

/// Sweep points of one trial share gains and angles; only the swept
/// parameter differs.
#[test]
fn trials_are_paired_across_sweep_points() {
    let mut config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_gamma.toml")).unwrap();
    config.run.trials = 3;
    let points = config.sweep_points();
    for trial in 0..3 {
        let a = generate_scenario(&config, &points[0], trial);
        let b = generate_scenario(&config, &points[3], trial);
        assert_eq!(a.target, b.target);
        assert_eq!(a.clutter, b.clutter);
        for (u, v) in a.users.iter().zip(&b.users) {
            assert_eq!(u.paths, v.paths);
            assert_eq!((u.sinr_target, v.sinr_target), (0.5, 4.0));
        }
    }
}

#[test]
fn derived_seeds_and_stream_prefixes_are_distinct() {
    let seeds: HashSet<u64> = (0..10_000).map(|t| derived_seed(1, t)).collect();
    assert_eq!(seeds.len(), 10_000);
    let prefixes: HashSet<[u64; 4]> = (0..10_000)
        .map(|t| {
            let mut rng = trial_rng(1, t);
            [rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()]
        })
        .collect();
    assert_eq!(prefixes.len(), 10_000);
}

#[test]
fn angles_stay_in_the_first_quadrant() {
    let config = ExperimentConfig::full_scale();
    let mut count = 0;
    for t in 0..10_000 {
        let draw = draw_scenario(&config.population, &mut trial_rng(9, t));
        let angles = draw
            .users
            .iter()
            .flatten()
            .flat_map(|p| [p.elevation, p.azimuth])
            .chain(std::iter::once(draw.target).chain(draw.clutter.iter().copied()).flat_map(|s| [s.elevation, s.azimuth]));
        for a in angles {
            assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&a), "{a}");
            count += 1;
        }
        if count >= 10_000 {
            break;
        }
    }
    assert!(count >= 10_000);
}

#[test]
fn empty_record_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_records(&[], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
    assert!(read_records(&path).unwrap().is_empty());
}

#[test]
fn records_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    let values = [0.1 + 0.2, 1e-300, 123456.789e10, f64::MIN_POSITIVE, 2.0f64.sqrt()];
    let records: Vec<SweepRecord> = values.iter().map(|&v| record(v)).collect();
    write_records(&records[..1], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(!text.contains('\r'));

    write_records(&records, &path).unwrap();
    let back = read_records(&path).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.scnr.to_bits(), b.scnr.to_bits());
        assert_eq!(a.ms.to_bits(), b.ms.to_bits());
        assert_eq!((a.scheme, &a.sweep_var, a.sweep_value, a.trial, a.seed), (b.scheme, &b.sweep_var, b.sweep_value, b.trial, b.seed));
        assert_eq!((a.converged, a.iterations), (b.converged, b.iterations));
    }
}

#[test]
fn write_error_names_the_path() {
    let err = write_records(&[], std::path::Path::new("/nonexistent-dir/x.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/x.csv"), "{err}");
}

#[test]
fn one_cell_gives_one_record_per_scheme() {
    let mut config = quick();
    config.run.schemes = vec![Scheme::Fas, Scheme::Fpa];
    let point = config.sweep_points()[1];
    let records = run_cell(&config, &point, 0);
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].scheme, Scheme::Fas);
    assert_eq!(records[1].scheme, Scheme::Fpa);
    assert!(records.iter().all(|r| r.seed == derived_seed(1, 0) && r.error.is_none()));
    // Same scenario, and FAS starts from the FPA configuration.
    assert!(records[0].scnr >= records[1].scnr * (1.0 - 1e-9));
}

#[test]
fn failures_are_recorded_in_band() {
    let mut config = quick();
    config.run.schemes = vec![Scheme::Rula];
    config.geometry.region_wavelengths = vec![1.0];
    let records = run_sweep(&config).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.error.is_some() && r.scnr.is_nan() && !r.converged));
}

#[test]
fn sweep_order_and_values_do_not_depend_on_threads() {
    let mut config = quick();
    config.run.schemes = vec![Scheme::Fpa, Scheme::Fas];
    let one = run_sweep_with_threads(&config, 1).unwrap();
    let three = run_sweep_with_threads(&config, 3).unwrap();
    let key = |r: &SweepRecord| (r.scheme, r.sweep_value.to_bits(), r.trial, r.scnr.to_bits(), r.iterations);
    assert_eq!(one.iter().map(key).collect::<Vec<_>>(), three.iter().map(key).collect::<Vec<_>>());
    let order: Vec<_> = one.iter().map(|r| (r.scheme, r.trial)).collect();
    assert_eq!(
        order,
        vec![
            (Scheme::Fpa, 0),
            (Scheme::Fpa, 1),
            (Scheme::Fpa, 0),
            (Scheme::Fpa, 1),
            (Scheme::Fas, 0),
            (Scheme::Fas, 1),
            (Scheme::Fas, 0),
            (Scheme::Fas, 1)
        ]
    );
}

#[test]
fn malformed_config_names_the_key() {
    let text = QUICK.replace("paths = 20", "paths = 0");
    let err = ExperimentConfig::from_toml(&text).and_then(|c| c.validate()).unwrap_err();
    assert!(err.to_string().contains("population.paths"), "{err}");
    let err = ExperimentConfig::from_toml(&QUICK.replace("clutter = 4", "clutter = \"four\"")).unwrap_err();
    assert!(err.to_string().contains("clutter"), "{err}");
}
