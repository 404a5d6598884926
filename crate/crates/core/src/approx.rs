//! Interpretable approximations of the exact bounds and their checks.
//!
//! * effective information bandwidth: delay information after removing the
//!   complex gain depends only on the ω-weighted spread of subcarriers;
//! * effective aperture: AoA information under matched combining is close
//!   to coherent gain times the combiner-weighted spatial variance;
//! * leakage inflation: a per-state scalar manifold loss `A` scales the FIM
//!   by `A` and every CRB by `1/A`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fisher::{self, FimBundle};
use crate::frontend::{CombinerBank, DmaConfiguration, Normalization};
use crate::geometry::{EtaLayout, PathSet};
use crate::linalg;
use crate::scenario::{Scenario, SPEED_OF_LIGHT};
use crate::signal::Manifolds;

/// Values on the (state, subcarrier) grid, state-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    pub states: usize,
    pub subcarriers: usize,
    pub values: Vec<f64>,
}

impl WeightGrid {
    pub fn new(states: usize, subcarriers: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), states * subcarriers);
        Self {
            states,
            subcarriers,
            values,
        }
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.subcarriers + k]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.values.len() as f64
    }

    /// `(k, value)` pairs in state-major order.
    fn iter_k(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (i % self.subcarriers, v))
    }
}

/// `2P|γ_ℓ|²/σ²`.
pub fn path_snr(scenario: &Scenario, paths: &PathSet, l: usize) -> f64 {
    2.0 * scenario.waveform.power_w * paths.gamma[l].norm_sqr() / scenario.waveform.noise_w
}

/// `ω_{j,k} = (2P|γ_ℓ|²/σ²)·‖g_{j,ℓ}[k]‖²`.
pub fn weights_omega(scenario: &Scenario, paths: &PathSet, manifolds: &Manifolds, l: usize) -> WeightGrid {
    let snr = path_snr(scenario, paths, l);
    let (jn, kn) = (manifolds.states, manifolds.subcarriers);
    let values = (0..jn * kn).map(|i| snr * manifolds.gain(i / kn, i % kn, l)).collect();
    WeightGrid::new(jn, kn, values)
}

/// Weighted mean frequency and centred spread `(f̄_ω, β²_eff)`.
pub fn effective_bandwidth(omega: &WeightGrid, grid: &[f64]) -> Result<(f64, f64)> {
    if grid.len() != omega.subcarriers {
        return Err(Error::Dimension(format!(
            "{} frequencies for {} subcarriers",
            grid.len(),
            omega.subcarriers
        )));
    }
    let total = omega.total();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("all weights are zero".into()));
    }
    let mean = omega.iter_k().map(|(k, w)| w * grid[k]).sum::<f64>() / total;
    let spread = omega
        .iter_k()
        .map(|(k, w)| w * (grid[k] - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok((mean, spread))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDecomposition {
    /// `4π² Σ ω f_k²`.
    pub direct: f64,
    /// `4π² (β²_eff + f̄²_ω) Σ ω`.
    pub decomposed: f64,
    pub residual: f64,
}

pub fn delay_info_decomposition(omega: &WeightGrid, grid: &[f64]) -> Result<DelayDecomposition> {
    let (mean, spread) = effective_bandwidth(omega, grid)?;
    let direct = 4.0 * PI * PI * omega.iter_k().map(|(k, w)| w * grid[k] * grid[k]).sum::<f64>();
    let decomposed = 4.0 * PI * PI * (spread + mean * mean) * omega.total();
    Ok(DelayDecomposition {
        direct,
        decomposed,
        residual: (direct - decomposed).abs() / direct,
    })
}

/// Delay information left after eliminating the complex gain: `4π² β²_eff Σω`.
pub fn effective_bandwidth_delay_efim(omega: &WeightGrid, grid: &[f64]) -> Result<f64> {
    let (_, spread) = effective_bandwidth(omega, grid)?;
    Ok(4.0 * PI * PI * spread * omega.total())
}

/// Exact EFIM of one path parameter with that path's complex gain as nuisance.
fn single_path_efim(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    l: usize,
    parameter: usize,
) -> Result<(f64, f64)> {
    let eta = EtaLayout::new(paths.len());
    let cols = [parameter, eta.gamma_re(l), eta.gamma_im(l)];
    let j = fisher::path_fim_columns(scenario, paths, manifolds, &cols);
    let part = fisher::Partition::new(vec![0], vec![1, 2]);
    let e = fisher::efim(&j, &part)?;
    Ok((e[(0, 0)], j[(0, 0)]))
}

/// `(EFIM_ττ, J_ττ)` for path `l` with `(τ_ℓ, γ_R, γ_I)` unknown.
pub fn single_path_delay_efim(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    l: usize,
) -> Result<(f64, f64)> {
    single_path_efim(scenario, paths, manifolds, l, EtaLayout::new(paths.len()).tau(l))
}

/// `(EFIM_φφ, J_φφ)` for path `l` with `(φ_ℓ, γ_R, γ_I)` unknown.
pub fn single_path_aoa_efim(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    l: usize,
) -> Result<(f64, f64)> {
    single_path_efim(scenario, paths, manifolds, l, EtaLayout::new(paths.len()).phi(l))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEfimCheck {
    pub efim_delay: f64,
    pub prediction: f64,
    /// Raw FIM delay term before nuisance elimination.
    pub j_tautau: f64,
    pub beta_eff2: f64,
    /// `|EFIM − prediction| / EFIM`, or relative to `J_ττ` when the EFIM
    /// is numerically zero.
    pub residual: f64,
}

pub fn efim_delay_check(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    l: usize,
) -> Result<DelayEfimCheck> {
    efim_delay_check_with(scenario, paths, manifolds, l, effective_bandwidth_delay_efim)
}

/// As [`efim_delay_check`] with a substitute prediction formula.
pub fn efim_delay_check_with(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    l: usize,
    formula: fn(&WeightGrid, &[f64]) -> Result<f64>,
) -> Result<DelayEfimCheck> {
    let (efim_delay, j_tautau) = single_path_delay_efim(scenario, paths, manifolds, l)?;
    let omega = weights_omega(scenario, paths, manifolds, l);
    let grid = scenario.waveform.subcarrier_grid();
    let prediction = formula(&omega, &grid)?;
    let (_, beta_eff2) = effective_bandwidth(&omega, &grid)?;
    let denom = if efim_delay.abs() > 1e-9 * j_tautau {
        efim_delay.abs()
    } else {
        j_tautau
    };
    Ok(DelayEfimCheck {
        efim_delay,
        prediction,
        j_tautau,
        beta_eff2,
        residual: (efim_delay - prediction).abs() / denom,
    })
}

/// Element power profile `p_n ∝ Σ_m |W_{n,m}|²`, summing to one.
pub fn power_profile(w: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let rows: Vec<f64> = w.row_iter().map(|r| r.norm_squared()).collect();
    let total: f64 = rows.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("combiner is identically zero".into()));
    }
    Ok(rows.into_iter().map(|v| v / total).collect())
}

/// Centroid and second central moment of `x_n = (n−1)d_x` under `p`.
pub fn effective_aperture(profile: &[f64], spacing: f64) -> (f64, f64) {
    let x = |n: usize| n as f64 * spacing;
    let centroid: f64 = profile.iter().enumerate().map(|(n, p)| p * x(n)).sum();
    let moment = profile
        .iter()
        .enumerate()
        .map(|(n, p)| p * (x(n) - centroid).powi(2))
        .sum();
    (centroid, moment)
}

/// Coherent gain and aperture diagnostics of one path over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureDiagnostics {
    pub gain: WeightGrid,
    pub centroid: WeightGrid,
    pub d_eff2: WeightGrid,
}

pub fn aperture_diagnostics(
    scenario: &Scenario,
    bank: &CombinerBank,
    manifolds: &Manifolds,
    l: usize,
) -> Result<ApertureDiagnostics> {
    let (jn, kn) = (manifolds.states, manifolds.subcarriers);
    let dx = scenario.hardware.element_spacing_m;
    let mut gain = Vec::with_capacity(jn * kn);
    let mut centroid = Vec::with_capacity(jn * kn);
    let mut moment = Vec::with_capacity(jn * kn);
    for j in 0..jn {
        for k in 0..kn {
            gain.push(manifolds.gain(j, k, l));
            let (c, d) = effective_aperture(&power_profile(bank.get(j, k))?, dx);
            centroid.push(c);
            moment.push(d);
        }
    }
    Ok(ApertureDiagnostics {
        gain: WeightGrid::new(jn, kn, gain),
        centroid: WeightGrid::new(jn, kn, centroid),
        d_eff2: WeightGrid::new(jn, kn, moment),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularInfo {
    /// AoA information after eliminating the path's complex gain.
    pub exact: f64,
    /// Raw FIM term `(2P|γ|²/σ²) Σ‖Wᴴ∂a/∂φ‖²`.
    pub raw: f64,
    /// `(2P|γ|²/σ²) ΣΣ (2πf_k cosφ/c)² G_j[k] D²_eff,j[k]`.
    pub approx: f64,
}

impl AngularInfo {
    pub fn ratio(&self) -> f64 {
        self.exact / self.approx
    }
}

pub fn angular_info_approx(
    scenario: &Scenario,
    paths: &PathSet,
    bank: &CombinerBank,
    manifolds: &Manifolds,
    l: usize,
) -> Result<AngularInfo> {
    let (exact, raw) = single_path_aoa_efim(scenario, paths, manifolds, l)?;
    let diag = aperture_diagnostics(scenario, bank, manifolds, l)?;
    let snr = path_snr(scenario, paths, l);
    let cos_phi = paths.phi[l].cos();
    let mut approx = 0.0;
    for j in 0..manifolds.states {
        for k in 0..manifolds.subcarriers {
            let kappa = 2.0 * PI * scenario.waveform.subcarrier_hz(k) * cos_phi / SPEED_OF_LIGHT;
            approx += kappa * kappa * diag.gain.get(j, k) * diag.d_eff2.get(j, k);
        }
    }
    Ok(AngularInfo {
        exact,
        raw,
        approx: snr * approx,
    })
}

/// First-order leakage law `CRB_leak = CRB_0 / A_leak`.
pub fn leakage_inflated_crb(crb_0: f64, a_leak: f64) -> Result<f64> {
    if !(a_leak > 0.0 && a_leak <= 1.0) {
        return Err(Error::InvalidArgument(format!("leakage efficiency {a_leak} outside (0, 1]")));
    }
    Ok(crb_0 / a_leak)
}

/// CRB ratios `CRB_leak/CRB_0` when every combiner entry of every state is
/// scaled by `√A` (raw, un-normalized combiners).
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageFactorization {
    pub a: f64,
    /// One ratio per η coordinate.
    pub path_ratios: Vec<f64>,
    /// One ratio per position coordinate.
    pub position_ratios: Vec<f64>,
}

impl LeakageFactorization {
    /// Largest relative deviation from `1/A`.
    pub fn max_error(&self) -> f64 {
        let target = 1.0 / self.a;
        self.path_ratios
            .iter()
            .chain(&self.position_ratios)
            .map(|r| (r - target).abs() / target)
            .fold(0.0, f64::max)
    }
}

pub fn leakage_factorization(
    scenario: &Scenario,
    paths: &PathSet,
    config: &DmaConfiguration,
    a: f64,
) -> Result<LeakageFactorization> {
    leakage_inflated_crb(1.0, a)?;
    let base = CombinerBank::build(scenario, config, Normalization::None)?;
    let mut scaled = base.clone();
    for j in 0..scaled.states {
        scaled.scale_state(j, a.sqrt());
    }
    let eval = |bank: &CombinerBank| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = Manifolds::build(scenario, paths, bank);
        let b = FimBundle::compute(scenario, paths, &m)?;
        let eta_inv = linalg::spd_inverse(&b.j_eta, "path-domain FIM")?;
        let efim_inv = linalg::spd_inverse(&b.j_efim, "EFIM")?;
        Ok((eta_inv, efim_inv))
    };
    let (eta0, pos0) = eval(&base)?;
    let (eta1, pos1) = eval(&scaled)?;
    Ok(LeakageFactorization {
        a,
        path_ratios: (0..eta0.nrows()).map(|u| eta1[(u, u)] / eta0[(u, u)]).collect(),
        position_ratios: (0..pos0.nrows()).map(|u| pos1[(u, u)] / pos0[(u, u)]).collect(),
    })
}

/// `J_ττ ∇τ∇τᵀ + J_φφ ∇φ∇φᵀ` with the direct-path gradients.
pub fn ue_position_efim_approx(j_tautau: f64, j_phiphi: f64, phi0: f64, r0: f64) -> Matrix2<f64> {
    let (s, c) = phi0.sin_cos();
    let grad_tau = Vector2::new(c, s) / SPEED_OF_LIGHT;
    let grad_phi = Vector2::new(-s, c) / r0;
    grad_tau * grad_tau.transpose() * j_tautau + grad_phi * grad_phi.transpose() * j_phiphi
}

/// UE PEB implied by [`ue_position_efim_approx`].
pub fn ue_peb_approx(j_tautau: f64, j_phiphi: f64, phi0: f64, r0: f64) -> Result<f64> {
    let m = ue_position_efim_approx(j_tautau, j_phiphi, phi0, r0);
    // eigenvalues are J_ττ/c² and J_φφ/r0²
    let (a, b) = (j_tautau / (SPEED_OF_LIGHT * SPEED_OF_LIGHT), j_phiphi / (r0 * r0));
    if !(a > 0.0 && b > 0.0) || a.min(b) < 1e-12 * a.max(b) {
        return Err(Error::Unlocalizable("approximate UE EFIM is singular".into()));
    }
    Ok(m.try_inverse().map_or(f64::INFINITY, |inv| inv.trace()).sqrt())
}
