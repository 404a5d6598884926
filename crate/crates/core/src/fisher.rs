//! Fisher information, equivalent Fisher information and error bounds.
//!
//! Power bookkeeping: the mean derivatives carry the `√P` of `μ`, so the
//! per-tile information is `(2/σ²)·Re{∂μᴴ ∂μ}`. This equals the
//! `2P/σ²` prefactor applied to P-free derivatives.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{geometry_jacobian, EtaLayout, JacobianT, PathSet, XiLayout};
use crate::linalg;
use crate::par;
use crate::scenario::Scenario;
use crate::signal::{delay_phasor, Manifolds};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `∂μ_{j,k}/∂η` as an `N_RF × 4L` matrix, columns ordered (τ, φ, γ_R, γ_I).
pub fn mean_derivatives(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    j: usize,
    k: usize,
) -> DMatrix<Complex64> {
    let layout = EtaLayout::new(paths.len());
    let f = scenario.waveform.subcarrier_hz(k);
    let sqrt_p = scenario.waveform.power_w.sqrt();
    let mut d = DMatrix::zeros(manifolds.rf_chains, layout.dim());
    for l in 0..paths.len() {
        let base = delay_phasor(f, paths.tau[l]) * sqrt_p;
        let g = manifolds.g(j, k, l);
        let dg = manifolds.dg(j, k, l);
        let gamma = paths.gamma[l];
        d.set_column(layout.tau(l), &(g * (-J * 2.0 * PI * f * gamma * base)));
        d.set_column(layout.phi(l), &(dg * (gamma * base)));
        d.set_column(layout.gamma_re(l), &(g * base));
        d.set_column(layout.gamma_im(l), &(g * (J * base)));
    }
    d
}

/// `(2/σ²)·Re{Dᴴ D}`.
pub fn local_fim(derivatives: &DMatrix<Complex64>, noise_w: f64) -> DMatrix<f64> {
    let gram = derivatives.ad_mul(derivatives);
    let m = gram.map(|v| v.re) * (2.0 / noise_w);
    linalg::symmetrize(&m)
}

/// Path-domain FIM `J_η = Σ_{j,k} J_{j,k}`.
pub fn path_fim(scenario: &Scenario, paths: &PathSet, manifolds: &Manifolds) -> DMatrix<f64> {
    let all: Vec<usize> = (0..EtaLayout::new(paths.len()).dim()).collect();
    path_fim_columns(scenario, paths, manifolds, &all)
}

/// FIM restricted to the listed η coordinates (in the given order).
pub fn path_fim_columns(
    scenario: &Scenario,
    paths: &PathSet,
    manifolds: &Manifolds,
    columns: &[usize],
) -> DMatrix<f64> {
    let tiles = manifolds.states * manifolds.subcarriers;
    let k_count = manifolds.subcarriers;
    let noise = scenario.waveform.noise_w;
    let locals = par::map_indexed(tiles, |idx| {
        let (j, k) = (idx / k_count, idx % k_count);
        let d = mean_derivatives(scenario, paths, manifolds, j, k);
        local_fim(&d.select_columns(columns.iter()), noise)
    });
    par::tree_sum(locals).unwrap_or_else(|| DMatrix::zeros(columns.len(), columns.len()))
}

/// Per-state FIM contributions `J_j = Σ_k J_{j,k}`.
pub fn state_fims(scenario: &Scenario, paths: &PathSet, manifolds: &Manifolds) -> Vec<DMatrix<f64>> {
    let k_count = manifolds.subcarriers;
    let noise = scenario.waveform.noise_w;
    (0..manifolds.states)
        .map(|j| {
            let locals = par::map_indexed(k_count, |k| {
                local_fim(&mean_derivatives(scenario, paths, manifolds, j, k), noise)
            });
            par::tree_sum(locals).expect("at least one subcarrier")
        })
        .collect()
}

/// `J̃ = Tᵀ J_η T`.
pub fn geometry_fim(j_eta: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if j_eta.nrows() != t.nrows() || j_eta.ncols() != t.nrows() {
        return Err(Error::Dimension(format!(
            "J_eta is {}x{}, T is {}x{}",
            j_eta.nrows(),
            j_eta.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    Ok(linalg::symmetrize(&(t.transpose() * j_eta * t)))
}

/// Split of a parameter vector into interest and nuisance coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub interest: Vec<usize>,
    pub nuisance: Vec<usize>,
}

impl Partition {
    pub fn new(interest: Vec<usize>, nuisance: Vec<usize>) -> Self {
        Self { interest, nuisance }
    }

    /// Positions of interest, path gains as nuisance.
    pub fn positions(xi: XiLayout) -> Self {
        Self::new(xi.interest(), xi.nuisance())
    }
}

/// Schur complement `J_ii − J_in J_nn⁻¹ J_inᵀ`.
pub fn efim(j_geo: &DMatrix<f64>, partition: &Partition) -> Result<DMatrix<f64>> {
    let ii = linalg::select(j_geo, &partition.interest, &partition.interest);
    let inn = linalg::select(j_geo, &partition.interest, &partition.nuisance);
    let nn = linalg::select(j_geo, &partition.nuisance, &partition.nuisance);
    linalg::schur_complement(&ii, &inn, &nn, "nuisance FIM block")
}

/// `√Tr{J_e⁻¹}` over the first `2(S+1)` coordinates.
pub fn peb(j_efim: &DMatrix<f64>, scatterers: usize) -> Result<f64> {
    let dim = 2 * (scatterers + 1);
    if j_efim.nrows() < dim {
        return Err(Error::Dimension(format!(
            "EFIM has {} rows, PEB needs {dim}",
            j_efim.nrows()
        )));
    }
    let inv = invert_efim(j_efim)?;
    Ok((0..dim).map(|i| inv[(i, i)]).sum::<f64>().sqrt())
}

fn invert_efim(j_efim: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(j_efim, "EFIM").map_err(|e| match e {
        Error::Singular { condition, .. } => {
            Error::Unlocalizable(format!("EFIM condition number {condition:.3e}"))
        }
        other => other,
    })
}

/// `[J⁻¹]_{u,u}`.
pub fn crb_entry(j: &DMatrix<f64>, u: usize) -> Result<f64> {
    if u >= j.nrows() {
        return Err(Error::InvalidArgument(format!("index {u} out of range")));
    }
    Ok(linalg::spd_inverse(j, "FIM")?[(u, u)])
}

/// All information matrices for one scenario and combiner bank.
#[derive(Debug, Clone)]
pub struct FimBundle {
    pub j_eta: DMatrix<f64>,
    pub t: JacobianT,
    pub j_geo: DMatrix<f64>,
    pub j_efim: DMatrix<f64>,
    pub partition: Partition,
}

impl FimBundle {
    pub fn compute(scenario: &Scenario, paths: &PathSet, manifolds: &Manifolds) -> Result<Self> {
        let j_eta = path_fim(scenario, paths, manifolds);
        Self::from_path_fim(scenario, paths, j_eta)
    }

    pub fn from_path_fim(scenario: &Scenario, paths: &PathSet, j_eta: DMatrix<f64>) -> Result<Self> {
        let t = geometry_jacobian(scenario, paths);
        let j_geo = geometry_fim(&j_eta, &t.matrix)?;
        let partition = Partition::positions(t.xi);
        let j_efim = efim(&j_geo, &partition)?;
        Ok(FimBundle {
            j_eta,
            t,
            j_geo,
            j_efim,
            partition,
        })
    }

    pub fn scatterers(&self) -> usize {
        self.t.xi.scatterers
    }

    pub fn peb(&self) -> Result<f64> {
        peb(&self.j_efim, self.scatterers())
    }

    pub fn report(&self) -> Result<BoundReport> {
        BoundReport::from_bundle(self)
    }
}

/// CRBs (variances) and PEBs extracted from a [`FimBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Delay CRB per path (s²).
    pub crb_delay: Vec<f64>,
    /// AoA CRB per path (rad²).
    pub crb_aoa: Vec<f64>,
    /// Position CRB per coordinate, UE first (m²).
    pub crb_position: Vec<f64>,
    /// PEB over UE and scatterers (m).
    pub peb: f64,
    /// PEB of the UE alone (m).
    pub peb_ue: f64,
    pub condition_eta: f64,
    pub condition_efim: f64,
}

impl BoundReport {
    pub fn from_bundle(bundle: &FimBundle) -> Result<Self> {
        let eta = bundle.t.eta;
        let efim_inv = invert_efim(&bundle.j_efim)?;
        let eta_inv = linalg::spd_inverse(&bundle.j_eta, "path-domain FIM")?;
        let dim = bundle.j_efim.nrows();
        let crb_position: Vec<f64> = (0..dim).map(|i| efim_inv[(i, i)]).collect();
        Ok(BoundReport {
            crb_delay: (0..eta.paths).map(|l| eta_inv[(eta.tau(l), eta.tau(l))]).collect(),
            crb_aoa: (0..eta.paths).map(|l| eta_inv[(eta.phi(l), eta.phi(l))]).collect(),
            peb: crb_position.iter().sum::<f64>().sqrt(),
            peb_ue: (crb_position[0] + crb_position[1]).sqrt(),
            crb_position,
            condition_eta: linalg::equilibrated_condition(&bundle.j_eta),
            condition_efim: linalg::equilibrated_condition(&bundle.j_efim),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,value\n");
        for (l, v) in self.crb_delay.iter().enumerate() {
            s += &format!("crb_delay_{l}_s2,{v:e}\n");
        }
        for (l, v) in self.crb_aoa.iter().enumerate() {
            s += &format!("crb_aoa_{l}_rad2,{v:e}\n");
        }
        for (i, v) in self.crb_position.iter().enumerate() {
            let who = if i < 2 { "ue".to_string() } else { format!("sp{}", i / 2) };
            let axis = if i % 2 == 0 { "x" } else { "y" };
            s += &format!("crb_{who}_{axis}_m2,{v:e}\n");
        }
        s += &format!("peb_m,{:e}\n", self.peb);
        s += &format!("peb_ue_m,{:e}\n", self.peb_ue);
        s += &format!("condition_eta,{:e}\n", self.condition_eta);
        s += &format!("condition_efim,{:e}\n", self.condition_efim);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{CombinerBank, DmaConfiguration, Normalization};
    use crate::linalg::{is_psd, numerical_rank};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(s: &Scenario) -> (PathSet, Manifolds) {
        let p = PathSet::from_scenario(s);
        let cfg = DmaConfiguration::uniform(s.states, s.hardware.elements(), s.waveform.carrier_hz + 40e6);
        let bank = CombinerBank::build(s, &cfg, Normalization::PerColumn).unwrap();
        let m = Manifolds::build(s, &p, &bank);
        (p, m)
    }

    fn small() -> Scenario {
        let mut s = Scenario::reference();
        s.waveform.subcarriers = 16;
        s
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn zero_gain_kills_tau_phi_columns() {
        let s = small();
        let (mut p, m) = setup(&s);
        p.gamma[1] = Complex64::new(0.0, 0.0);
        let d = mean_derivatives(&s, &p, &m, 0, 0);
        let eta = EtaLayout::new(3);
        assert_eq!(d.column(eta.tau(1)).norm(), 0.0);
        assert_eq!(d.column(eta.phi(1)).norm(), 0.0);
        assert!(d.column(eta.gamma_re(1)).norm() > 0.0);
    }

    #[test]
    fn endfire_phi_column_vanishes() {
        let s = small();
        let (mut p, m) = setup(&s);
        p.phi[0] = PI / 2.0;
        let mut s2 = s.clone();
        s2.geometry.ue = [0.0, 3.0];
        let cfg = DmaConfiguration::uniform(s.states, 32, 20e9);
        let bank = CombinerBank::build(&s2, &cfg, Normalization::PerColumn).unwrap();
        let p2 = PathSet::from_scenario(&s2);
        let m2 = Manifolds::build(&s2, &p2, &bank);
        let d = mean_derivatives(&s2, &p2, &m2, 0, 0);
        assert!(d.column(EtaLayout::new(3).phi(0)).norm() < 1e-20);
        let _ = (p, m);
    }

    #[test]
    fn fim_is_symmetric_psd_and_scales_with_noise() {
        let s = small();
        let (p, m) = setup(&s);
        let j = path_fim(&s, &p, &m);
        assert_eq!(j, j.transpose());
        let (sc, _) = (
            DMatrix::from_fn(12, 12, |i, k| j[(i, k)] / (j[(i, i)] * j[(k, k)]).sqrt()),
            0,
        );
        assert!(is_psd(&sc, 1e-9));
        let j2 = path_fim(&s.with_noise(2.0 * s.waveform.noise_w), &p, &m);
        assert!(linalg::relative_frobenius(&(j2 * 2.0), &j) < 1e-14);
    }

    #[test]
    fn single_tile_delay_information() {
        let mut s = small().single_path();
        s.waveform.subcarriers = 1;
        s.states = 1;
        let (mut p, m) = setup(&s);
        p.gamma[0] = Complex64::new(3e-4, 0.0);
        let j = path_fim(&s, &p, &m);
        let f = s.waveform.subcarrier_hz(0);
        let g2 = m.gain(0, 0, 0);
        let expected = 2.0 * s.waveform.power_w * 9e-8 / s.waveform.noise_w * 4.0 * PI * PI * f * f * g2;
        assert!((j[(0, 0)] - expected).abs() / expected < 1e-12);
        // delay/gain-phase ambiguity makes the single-tile FIM rank deficient
        let scale: Vec<f64> = (0..4).map(|i| j[(i, i)].sqrt()).collect();
        let sc = DMatrix::from_fn(4, 4, |a, b| j[(a, b)] / (scale[a] * scale[b]));
        assert!(numerical_rank(&sc, 1e-9) < 4);
    }

    #[test]
    fn adding_tiles_is_a_psd_increment() {
        let s = small();
        let (p, m) = setup(&s);
        let per_state = state_fims(&s, &p, &m);
        for inc in &per_state {
            let scale: Vec<f64> = (0..12).map(|i| inc[(i, i)].sqrt()).collect();
            let sc = DMatrix::from_fn(12, 12, |a, b| inc[(a, b)] / (scale[a] * scale[b]));
            assert!(is_psd(&sc, 1e-9));
        }
        let total = per_state.into_iter().reduce(|a, b| a + b).unwrap();
        let full = path_fim(&s, &p, &m);
        assert!(linalg::relative_frobenius(&total, &full) < 1e-13);
    }

    #[test]
    fn geometry_fim_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let j = random_spd(6, &mut rng);
        assert_eq!(geometry_fim(&j, &DMatrix::identity(6, 6)).unwrap(), j);
        let t = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-2.0..2.0));
        let g = geometry_fim(&j, &t).unwrap();
        let direct = t.transpose() * &j * &t;
        assert!(linalg::relative_frobenius(&g, &direct) < 1e-12);
        let low = DMatrix::from_fn(6, 6, |a, b| if a < 2 && b < 2 { j[(a, b)] } else { 0.0 });
        let t6 = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        assert!(numerical_rank(&geometry_fim(&low, &t6).unwrap(), 1e-10) <= 2);
        assert!(geometry_fim(&j, &DMatrix::identity(5, 5)).is_err());
    }

    #[test]
    fn efim_matches_block_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let j = random_spd(8, &mut rng);
            let part = Partition::new((0..3).collect(), (3..8).collect());
            let e = efim(&j, &part).unwrap();
            let e_inv = linalg::spd_inverse(&e, "e").unwrap();
            let full_inv = linalg::spd_inverse(&j, "j").unwrap();
            let block = linalg::select(&full_inv, &part.interest, &part.interest);
            assert!(linalg::relative_frobenius(&e_inv, &block) < 1e-10);
            // Loewner: J_ii − J_e ⪰ 0
            let ii = linalg::select(&j, &part.interest, &part.interest);
            assert!(is_psd(&(ii - &e), 1e-10));
        }
    }

    #[test]
    fn efim_with_decoupled_nuisance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_spd(3, &mut rng);
        let mut j = DMatrix::zeros(5, 5);
        j.view_mut((0, 0), (3, 3)).copy_from(&a);
        j[(3, 3)] = 2.0;
        j[(4, 4)] = 3.0;
        let part = Partition::new(vec![0, 1, 2], vec![3, 4]);
        assert_eq!(efim(&j, &part).unwrap(), a);
        j[(3, 3)] *= 10.0;
        j[(4, 4)] *= 10.0;
        assert_eq!(efim(&j, &part).unwrap(), a);
    }

    #[test]
    fn peb_and_crb_closed_forms() {
        assert!((peb(&DMatrix::identity(6, 6), 2).unwrap() - 6f64.sqrt()).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 4.0, 8.0]));
        let expected = (1.0 + 0.5 + 0.25 + 0.125f64).sqrt();
        assert!((peb(&d, 1).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(peb(&DMatrix::zeros(2, 2), 0), Err(Error::Unlocalizable(_))));
        assert!((crb_entry(&d, 2).unwrap() - 0.25).abs() < 1e-15);
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((crb_entry(&j, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crb_at_least_inverse_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let j = random_spd(5, &mut rng);
            for u in 0..5 {
                assert!(crb_entry(&j, u).unwrap() >= 1.0 / j[(u, u)] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn bundle_report_on_reference_scene() {
        let s = small();
        let (p, m) = setup(&s);
        let b = FimBundle::compute(&s, &p, &m).unwrap();
        assert_eq!(b.j_geo.shape(), (12, 12));
        assert_eq!(b.j_efim.shape(), (6, 6));
        let r = b.report().unwrap();
        assert!(r.peb > 0.0 && r.peb_ue > 0.0 && r.peb_ue <= r.peb);
        assert!((r.peb - b.peb().unwrap()).abs() < 1e-15 * r.peb.max(1.0));
        assert!(r.crb_delay.iter().chain(&r.crb_aoa).all(|&v| v > 0.0));
        assert!(r.to_csv().contains("peb_m,"));
    }
}
