//! Resonance selection: matched configurations and bound-driven search.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fisher::FimBundle;
use crate::frontend::{lorentzian_phase, resonance_for_phase, CombinerBank, DmaConfiguration, Normalization, WaveguideModel};
use crate::geometry::PathSet;
use crate::linalg;
use crate::par;
use crate::scenario::Scenario;
use crate::signal::steering_vector;

/// Common-phase grid of the matched rule.
const CHI_GRID: usize = 720;
/// Per-element phase grid of the refinement.
const PSI_GRID: usize = 621;
const PSI_LIMIT: f64 = 1.55;
const REFINE_SWEEPS: usize = 6;
/// Candidates generated per random-search batch.
const BATCH: usize = 16;
/// Levels tried per element by coordinate descent.
const CD_LEVELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RandomSearch,
    CoordinateDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Peb,
    /// Delay CRB of the direct path.
    DelayCrb,
    /// AoA CRB of the direct path.
    AoaCrb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunerSettings {
    pub budget: usize,
    pub seed: u64,
    pub method: Method,
    pub objective: Objective,
}

impl Default for TunerSettings {
    fn default() -> Self {
        TunerSettings {
            budget: 500,
            seed: 0,
            method: Method::RandomSearch,
            objective: Objective::Peb,
        }
    }
}

/// Result of a search.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub config: DmaConfiguration,
    pub objective: f64,
    /// Best-so-far objective after each evaluation.
    pub trace: Vec<f64>,
}

/// Wraps `x` into `(−π/2, π/2]` modulo π.
fn wrap_half(x: f64) -> f64 {
    let mut y = x.rem_euclid(PI);
    if y > PI / 2.0 {
        y -= PI;
    }
    y
}

/// Normalized coherent magnitude `|Σ cosΨ e^{j(ζ−Ψ)}| / √Σcos²Ψ`.
fn matched_gain(zeta: &[f64], psi: &[f64]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (&z, &p) in zeta.iter().zip(psi) {
        let c = p.cos();
        acc += Complex64::from_polar(c, z - p);
        energy += c * c;
    }
    if energy > 0.0 {
        acc.norm() / energy.sqrt()
    } else {
        0.0
    }
}

/// Resonances for one state matched to path `l` at the carrier.
///
/// Per microstrip, the incident, waveguide and coupling phases are
/// collected into `ζ_n`; a common phase χ is searched and each element
/// takes `Ψ_n = (ζ_n − χ)/2` (mod π), clipped to the reachable phase range,
/// followed by a few sweeps of per-element refinement over Ψ. Leakage is
/// ignored, so the result does not depend on Λ.
pub fn matched_configuration(scenario: &Scenario, paths: &PathSet, l: usize) -> Vec<f64> {
    let hw = &scenario.hardware;
    let fc = scenario.waveform.carrier_hz;
    let wg = WaveguideModel::from_hardware(hw);
    let a = steering_vector(fc, paths.phi[l], hw.elements(), hw.element_spacing_m);
    let psi_lo = lorentzian_phase(fc, hw.tuning_min_hz, hw.damping).max(-PSI_LIMIT);
    let psi_hi = lorentzian_phase(fc, hw.tuning_max_hz, hw.damping).min(PSI_LIMIT);
    let mut out = vec![0.0; hw.elements()];
    if hw.tuning_min_hz == hw.tuning_max_hz {
        out.iter_mut().for_each(|v| *v = hw.tuning_min_hz);
        return out;
    }
    for m in 0..hw.rf_chains {
        let members: Vec<usize> = (0..hw.elements()).filter(|&n| hw.microstrip_of(n) == m).collect();
        let zeta: Vec<f64> = members
            .iter()
            .map(|&n| {
                let h = hw.coupling_coeffs[n] * wg.propagation(fc, wg.path_length(n));
                (h.conj() * a[n]).arg() + PI / 2.0
            })
            .collect();
        let clip = |p: f64| p.clamp(psi_lo, psi_hi);
        let mut best = (f64::NEG_INFINITY, vec![0.0; members.len()]);
        for i in 0..CHI_GRID {
            let chi = 2.0 * PI * i as f64 / CHI_GRID as f64;
            let psi: Vec<f64> = zeta.iter().map(|z| clip(wrap_half((z - chi) / 2.0))).collect();
            let v = matched_gain(&zeta, &psi);
            if v > best.0 {
                best = (v, psi);
            }
        }
        let (mut value, mut psi) = best;
        for _ in 0..REFINE_SWEEPS {
            let mut improved = false;
            for i in 0..psi.len() {
                let keep = psi[i];
                let mut choice = (value, keep);
                for g in 0..PSI_GRID {
                    psi[i] = psi_lo + (psi_hi - psi_lo) * g as f64 / (PSI_GRID - 1) as f64;
                    let v = matched_gain(&zeta, &psi);
                    if v > choice.0 {
                        choice = (v, psi[i]);
                    }
                }
                psi[i] = choice.1;
                if choice.0 > value {
                    value = choice.0;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        for (&n, &p) in members.iter().zip(&psi) {
            let f_r = resonance_for_phase(fc, p, hw.damping).unwrap_or(hw.tuning_min_hz);
            out[n] = f_r.clamp(hw.tuning_min_hz, hw.tuning_max_hz);
        }
    }
    out
}

/// State `j` matched to path `j mod L`: UE, then each scatterer, round robin.
pub fn matched_states(scenario: &Scenario, paths: &PathSet) -> DmaConfiguration {
    let per_path: Vec<Vec<f64>> = (0..paths.len().min(scenario.states))
        .map(|l| matched_configuration(scenario, paths, l))
        .collect();
    DmaConfiguration {
        resonances: (0..scenario.states).map(|j| per_path[j % paths.len()].clone()).collect(),
    }
}

/// All elements of all states at the carrier (clipped to the tuning range).
pub fn uniform_baseline(scenario: &Scenario) -> DmaConfiguration {
    let hw = &scenario.hardware;
    let f_r = scenario.waveform.carrier_hz.clamp(hw.tuning_min_hz, hw.tuning_max_hz);
    DmaConfiguration::uniform(scenario.states, hw.elements(), f_r)
}

/// Objective value of a configuration; infeasible configurations map to +∞.
pub fn evaluate(scenario: &Scenario, paths: &PathSet, config: &DmaConfiguration, objective: Objective) -> f64 {
    try_evaluate(scenario, paths, config, objective).unwrap_or(f64::INFINITY)
}

fn try_evaluate(scenario: &Scenario, paths: &PathSet, config: &DmaConfiguration, objective: Objective) -> Result<f64> {
    let bank = CombinerBank::build(scenario, config, Normalization::PerColumn)?;
    let manifolds = crate::signal::Manifolds::build(scenario, paths, &bank);
    let bundle = FimBundle::compute(scenario, paths, &manifolds)?;
    let value = match objective {
        Objective::Peb => bundle.peb()?,
        Objective::DelayCrb | Objective::AoaCrb => {
            let eta = bundle.t.eta;
            let u = if objective == Objective::DelayCrb { eta.tau(0) } else { eta.phi(0) };
            linalg::spd_inverse(&bundle.j_eta, "path-domain FIM")?[(u, u)]
        }
    };
    Ok(if value.is_finite() { value } else { f64::INFINITY })
}

fn perturb(base: &DmaConfiguration, scenario: &Scenario, rng: &mut ChaCha8Rng) -> DmaConfiguration {
    let hw = &scenario.hardware;
    let span = hw.tuning_max_hz - hw.tuning_min_hz;
    let step = Normal::new(0.0, 0.1 * span).expect("finite spread");
    let mut c = base.clone();
    for v in c.resonances.iter_mut().flatten() {
        if rng.random_bool(0.2) {
            *v = (*v + step.sample(rng)).clamp(hw.tuning_min_hz, hw.tuning_max_hz);
        }
    }
    c
}

/// Searches for the configuration minimizing `settings.objective`.
///
/// The first evaluation is always the matched configuration. Candidates
/// are generated sequentially from a generator seeded by `(seed, batch)`
/// and evaluated in parallel; ties go to the lower candidate index, so
/// the outcome does not depend on the thread count and the best value
/// after `n` evaluations is the same for every budget `≥ n`.
pub fn optimize_peb(scenario: &Scenario, settings: &TunerSettings) -> Result<Tuned> {
    if settings.budget == 0 {
        return Err(Error::InvalidArgument("tuner budget must be at least 1".into()));
    }
    let paths = PathSet::from_scenario(scenario);
    let seed_config = matched_states(scenario, &paths);
    let mut best = (evaluate(scenario, &paths, &seed_config, settings.objective), seed_config);
    let mut trace = vec![best.0];
    match settings.method {
        Method::RandomSearch => {
            let mut batch = 0u64;
            while trace.len() < settings.budget {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                rng.set_stream(batch);
                let candidates: Vec<DmaConfiguration> =
                    (0..BATCH).map(|_| perturb(&best.1, scenario, &mut rng)).collect();
                let take = BATCH.min(settings.budget - trace.len());
                let values =
                    par::map_slice(&candidates[..take], |c| evaluate(scenario, &paths, c, settings.objective));
                absorb(&mut best, &mut trace, &candidates, &values);
                batch += 1;
            }
        }
        Method::CoordinateDescent => {
            let hw = &scenario.hardware;
            let levels: Vec<f64> = (0..CD_LEVELS)
                .map(|i| hw.tuning_min_hz + (hw.tuning_max_hz - hw.tuning_min_hz) * i as f64 / (CD_LEVELS - 1) as f64)
                .collect();
            let coords: Vec<(usize, usize)> = (0..scenario.states)
                .flat_map(|j| (0..hw.elements()).map(move |n| (j, n)))
                .collect();
            let mut pos = 0;
            while trace.len() < settings.budget {
                let (j, n) = coords[pos % coords.len()];
                let candidates: Vec<DmaConfiguration> = levels
                    .iter()
                    .map(|&f| {
                        let mut c = best.1.clone();
                        c.resonances[j][n] = f;
                        c
                    })
                    .collect();
                let take = CD_LEVELS.min(settings.budget - trace.len());
                let values =
                    par::map_slice(&candidates[..take], |c| evaluate(scenario, &paths, c, settings.objective));
                absorb(&mut best, &mut trace, &candidates, &values);
                pos += 1;
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Unlocalizable("no sampled configuration gives a finite objective".into()));
    }
    Ok(Tuned {
        config: best.1,
        objective: best.0,
        trace,
    })
}

fn absorb(best: &mut (f64, DmaConfiguration), trace: &mut Vec<f64>, candidates: &[DmaConfiguration], values: &[f64]) {
    for (c, &v) in candidates.iter().zip(values) {
        if v < best.0 {
            *best = (v, c.clone());
        }
        trace.push(best.0);
    }
}
