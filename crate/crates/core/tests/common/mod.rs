#![allow(dead_code)]

use dmasense::frontend::{CombinerBank, Normalization};
use dmasense::signal::Manifolds;
use dmasense::tuner;
use dmasense::{PathSet, Scenario};

/// Reference scenario with fewer subcarriers, for fast tests.
pub fn small(subcarriers: usize) -> Scenario {
    let mut s = Scenario::reference();
    let b = s.waveform.bandwidth_hz();
    s.waveform.subcarriers = subcarriers;
    s.with_bandwidth(b)
}

pub struct Setup {
    pub scenario: Scenario,
    pub paths: PathSet,
    pub bank: CombinerBank,
    pub manifolds: Manifolds,
}

/// Matched states, per-column normalization.
pub fn setup(scenario: Scenario) -> Setup {
    let paths = PathSet::from_scenario(&scenario);
    let config = tuner::matched_states(&scenario, &paths);
    let bank = CombinerBank::build(&scenario, &config, Normalization::PerColumn).unwrap();
    let manifolds = Manifolds::build(&scenario, &paths, &bank);
    Setup {
        scenario,
        paths,
        bank,
        manifolds,
    }
}
