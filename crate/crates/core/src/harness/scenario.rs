//! Random scenario draws. Every trial gets its own ChaCha stream seeded with
//! `seed ^ trial`; the draw does not depend on the swept value, so all sweep
//! points and all schemes of one trial see the same channels and angles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::harness::config::{dbm_to_watts, CoefficientLaw, ExperimentConfig, PopulationConfig, SweepPoint};
use crate::model::{Path, Scatterer, Scenario, User, C64};

pub fn derived_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derived_seed(seed, trial))
}

/// Random part of a scenario: gains and angles only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraw {
    pub users: Vec<Vec<Path>>,
    pub target: Scatterer,
    pub clutter: Vec<Scatterer>,
}

struct Sampler {
    law: CoefficientLaw,
    angle_max: f64,
}

impl Sampler {
    fn coefficient(&self, rng: &mut impl Rng) -> C64 {
        match self.law {
            CoefficientLaw::Complex => {
                let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid sigma");
                C64::new(n.sample(rng), n.sample(rng))
            }
            CoefficientLaw::Real => C64::new(Normal::new(0.0, 1.0).expect("valid sigma").sample(rng), 0.0),
        }
    }

    fn angle(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(0.0..=self.angle_max)
    }

    fn scatterer(&self, rng: &mut impl Rng) -> Scatterer {
        let coefficient = self.coefficient(rng);
        Scatterer {
            coefficient,
            elevation: self.angle(rng),
            azimuth: self.angle(rng),
        }
    }
}

/// Draws users (path by path), then the target, then the clutter patches.
pub fn draw_scenario(population: &PopulationConfig, rng: &mut impl Rng) -> ScenarioDraw {
    let s = Sampler {
        law: population.coefficients,
        angle_max: population.angle_max,
    };
    let users = (0..population.users)
        .map(|_| {
            (0..population.paths)
                .map(|_| {
                    let gain = s.coefficient(rng);
                    Path {
                        gain,
                        elevation: s.angle(rng),
                        azimuth: s.angle(rng),
                    }
                })
                .collect()
        })
        .collect();
    let target = s.scatterer(rng);
    let clutter = (0..population.clutter).map(|_| s.scatterer(rng)).collect();
    ScenarioDraw { users, target, clutter }
}

impl ScenarioDraw {
    pub fn scenario(&self, population: &PopulationConfig, point: &SweepPoint) -> Scenario {
        let noise = dbm_to_watts(population.noise_dbm);
        Scenario {
            users: self
                .users
                .iter()
                .map(|paths| User {
                    paths: paths.clone(),
                    noise_power: noise,
                    sinr_target: point.sinr_target,
                })
                .collect(),
            target: self.target,
            clutter: self.clutter.clone(),
            radar_noise_power: dbm_to_watts(population.radar_noise_dbm),
            power_budget: point.power_budget,
        }
    }
}

/// Scenario of trial `trial` at sweep point `point`.
pub fn generate_scenario(config: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Scenario {
    let mut rng = trial_rng(config.run.seed, trial);
    draw_scenario(&config.population, &mut rng).scenario(&config.population, point)
}
