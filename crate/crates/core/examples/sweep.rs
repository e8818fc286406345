//! A small Monte-Carlo region sweep run in memory: CSV to a temp file,
//! summary table to stdout.
//!
//! cargo run --release --example sweep -- [trials]

use fas_isac::baselines::Scheme;
use fas_isac::harness::{read_records, run_sweep, write_records, write_summary, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut config = ExperimentConfig::from_toml(include_str!("../../../configs/desk_region.toml"))?;
    config.run.trials = trials;
    config.run.schemes = vec![Scheme::Fas, Scheme::Fpa];

    let records = run_sweep(&config)?;
    let path = std::env::temp_dir().join("fas_isac_sweep_example.csv");
    write_records(&records, &path)?;
    let back = read_records(&path)?;
    println!("{} records round-tripped through {}", back.len(), path.display());

    write_summary(&records, &mut std::io::stdout())?;
    Ok(())
}
