//! Steering vectors, effective DMA manifolds and the observation model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::frontend::CombinerBank;
use crate::geometry::PathSet;
use crate::par;
use crate::scenario::{Scenario, SPEED_OF_LIGHT};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Far-field ULA response with element `n` at `(n−1)·d_x`, normalized by `1/√N`.
pub fn steering_vector(f: f64, phi: f64, elements: usize, spacing: f64) -> DVector<Complex64> {
    let scale = 1.0 / (elements as f64).sqrt();
    let step = 2.0 * PI * f * spacing * phi.sin() / SPEED_OF_LIGHT;
    DVector::from_fn(elements, |n, _| Complex64::from_polar(scale, step * n as f64))
}

/// `∂a/∂φ`, entry `n` is `j(2πf/c)(n−1)d_x cosφ · a_n`.
pub fn steering_derivative(f: f64, phi: f64, elements: usize, spacing: f64) -> DVector<Complex64> {
    let a = steering_vector(f, phi, elements, spacing);
    let k = 2.0 * PI * f * spacing * phi.cos() / SPEED_OF_LIGHT;
    DVector::from_fn(elements, |n, _| J * (k * n as f64) * a[n])
}

/// `g = Wᴴa`.
pub fn effective_manifold(w: &DMatrix<Complex64>, a: &DVector<Complex64>) -> DVector<Complex64> {
    w.ad_mul(a)
}

/// Effective manifolds `g_{j,ℓ}[k]` and their AoA derivatives `Wᴴ∂a/∂φ`.
#[derive(Debug, Clone)]
pub struct Manifolds {
    pub states: usize,
    pub subcarriers: usize,
    pub paths: usize,
    pub rf_chains: usize,
    g: Vec<DVector<Complex64>>,
    dg: Vec<DVector<Complex64>>,
}

impl Manifolds {
    pub fn build(scenario: &Scenario, paths: &PathSet, bank: &CombinerBank) -> Self {
        let n_el = scenario.hardware.elements();
        let dx = scenario.hardware.element_spacing_m;
        let k_count = scenario.waveform.subcarriers;
        let l_count = paths.len();
        let states = bank.states;
        let tiles = par::map_indexed(states * k_count, |idx| {
            let (j, k) = (idx / k_count, idx % k_count);
            let f = scenario.waveform.subcarrier_hz(k);
            let w = bank.get(j, k);
            (0..l_count)
                .map(|l| {
                    let a = steering_vector(f, paths.phi[l], n_el, dx);
                    let da = steering_derivative(f, paths.phi[l], n_el, dx);
                    (effective_manifold(w, &a), effective_manifold(w, &da))
                })
                .collect::<Vec<_>>()
        });
        let (g, dg) = tiles.into_iter().flatten().unzip();
        Manifolds {
            states,
            subcarriers: k_count,
            paths: l_count,
            rf_chains: scenario.hardware.rf_chains,
            g,
            dg,
        }
    }

    fn idx(&self, j: usize, k: usize, l: usize) -> usize {
        (j * self.subcarriers + k) * self.paths + l
    }

    pub fn g(&self, j: usize, k: usize, l: usize) -> &DVector<Complex64> {
        &self.g[self.idx(j, k, l)]
    }

    pub fn dg(&self, j: usize, k: usize, l: usize) -> &DVector<Complex64> {
        &self.dg[self.idx(j, k, l)]
    }

    /// Coherent gain `G_j[k] = ‖g_{j,ℓ}[k]‖²`.
    pub fn gain(&self, j: usize, k: usize, l: usize) -> f64 {
        self.g(j, k, l).norm_squared()
    }

    /// Multiplies every manifold of state `j` by `factor`.
    pub fn scale_state(&mut self, j: usize, factor: f64) {
        for k in 0..self.subcarriers {
            for l in 0..self.paths {
                let i = self.idx(j, k, l);
                self.g[i].scale_mut(factor);
                self.dg[i].scale_mut(factor);
            }
        }
    }
}

/// `e^{−j2πfτ}`.
pub fn delay_phasor(f: f64, tau: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * f * tau)
}

/// Noiseless mean `μ_{j,k} = √P Σ_ℓ γ_ℓ e^{−j2πf_kτ_ℓ} g_{j,ℓ}[k]`.
pub fn mean_observation(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    j: usize,
    k: usize,
) -> DVector<Complex64> {
    let f = scenario.waveform.subcarrier_hz(k);
    let sqrt_p = scenario.waveform.power_w.sqrt();
    let mut mu = DVector::zeros(manifolds.rf_chains);
    for l in 0..paths.len() {
        let coeff = paths.gamma[l] * delay_phasor(f, paths.tau[l]) * sqrt_p;
        mu.axpy(coeff, manifolds.g(j, k, l), Complex64::new(1.0, 0.0));
    }
    mu
}

/// Position of `(j, k, r)` in the stacked vector ỹ (state-major).
pub fn stacked_index(j: usize, k: usize, r: usize, subcarriers: usize, rf_chains: usize) -> usize {
    (j * subcarriers + k) * rf_chains + r
}

/// Inverse of [`stacked_index`].
pub fn unstack_index(i: usize, subcarriers: usize, rf_chains: usize) -> (usize, usize, usize) {
    let r = i % rf_chains;
    let jk = i / rf_chains;
    (jk / subcarriers, jk % subcarriers, r)
}

/// All means stacked state-major into a `J·K·N_RF` vector.
pub fn stacked_means(scenario: &Scenario, paths: &PathSet, manifolds: &Manifolds) -> DVector<Complex64> {
    let (jn, kn, rn) = (manifolds.states, manifolds.subcarriers, manifolds.rf_chains);
    let mut out = DVector::zeros(jn * kn * rn);
    for j in 0..jn {
        for k in 0..kn {
            let mu = mean_observation(scenario, paths, manifolds, j, k);
            for r in 0..rn {
                out[stacked_index(j, k, r, kn, rn)] = mu[r];
            }
        }
    }
    out
}

/// One noisy draw of ỹ with i.i.d. CN(0, σ²) entries added to the means.
pub fn simulate_observations(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    seed: u64,
) -> DVector<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = stacked_means(scenario, paths, manifolds);
    add_noise(&mut y, scenario.waveform.noise_w, &mut rng);
    y
}

pub(crate) fn add_noise<R: rand::Rng>(y: &mut DVector<Complex64>, noise_w: f64, rng: &mut R) {
    let sd = (noise_w / 2.0).sqrt();
    for v in y.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Complex64::new(sd * re, sd * im);
    }
}
