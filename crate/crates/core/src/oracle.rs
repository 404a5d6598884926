//! Finite-difference references for the analytic derivatives.
//!
//! These recompute the stacked mean and the path parameters from scratch
//! for perturbed inputs and share no derivative code with [`crate::fisher`]
//! or [`crate::geometry`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::frontend::CombinerBank;
use crate::geometry::{path_aoas, path_delays, EtaLayout, PathSet};
use crate::linalg;
use crate::scenario::{Point, Scenario};
use crate::signal::{stacked_means, Manifolds};

/// Perturbation sizes for the FIM oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub tau: f64,
    pub phi: f64,
    pub gamma: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps {
            tau: 1e-15,
            phi: 1e-6,
            gamma: 1e-6,
        }
    }
}

fn perturbed(paths: &PathSet, u: usize, delta: f64) -> PathSet {
    let layout = EtaLayout::new(paths.len());
    let mut p = paths.clone();
    let l = u % paths.len();
    match u / paths.len() {
        0 => p.tau[l] += delta,
        1 => p.phi[l] += delta,
        2 => p.gamma[l] += Complex64::new(delta, 0.0),
        _ => p.gamma[l] += Complex64::new(0.0, delta),
    }
    debug_assert!(u < layout.dim());
    p
}

fn mean_for(scenario: &Scenario, paths: &PathSet, bank: &CombinerBank) -> DVector<Complex64> {
    let m = Manifolds::build(scenario, paths, bank);
    stacked_means(scenario, paths, &m)
}

/// `∂μ̃/∂η` by central differences, one column per η coordinate.
pub fn fd_mean_jacobian(
    scenario: &Scenario,
    paths: &PathSet,
    bank: &CombinerBank,
    steps: FdSteps,
) -> DMatrix<Complex64> {
    let dim = EtaLayout::new(paths.len()).dim();
    let columns: Vec<DVector<Complex64>> = (0..dim)
        .map(|u| {
            let h = match u / paths.len() {
                0 => steps.tau,
                1 => steps.phi,
                _ => steps.gamma,
            };
            let plus = mean_for(scenario, &perturbed(paths, u, h), bank);
            let minus = mean_for(scenario, &perturbed(paths, u, -h), bank);
            (plus - minus) / Complex64::new(2.0 * h, 0.0)
        })
        .collect();
    DMatrix::from_columns(&columns)
}

/// `(2/σ²) Re{DᴴD}` with D from [`fd_mean_jacobian`].
pub fn fd_path_fim(scenario: &Scenario, paths: &PathSet, bank: &CombinerBank, steps: FdSteps) -> DMatrix<f64> {
    let d = fd_mean_jacobian(scenario, paths, bank, steps);
    let gram = d.ad_mul(&d).map(|v| v.re) * (2.0 / scenario.waveform.noise_w);
    linalg::symmetrize(&gram)
}

/// Relative Frobenius error of `a` against `b` after scaling both by
/// `diag(b)^{-1/2}` on each side, so every block contributes comparably.
pub fn equilibrated_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..b.nrows()).map(|i| 1.0 / b[(i, i)].abs().sqrt()).collect();
    let scale = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j]);
    linalg::relative_frobenius(&scale(a), &scale(b))
}

/// Path delays and AoAs `(τ, φ)` as a function of all point positions
/// `(p_U, q_1, …, q_S)`.
fn eta_geometric(scenario: &Scenario, points: &[Point]) -> Vec<f64> {
    let mut g = scenario.geometry.clone();
    g.ue = points[0];
    g.scatterers = points[1..].to_vec();
    let mut out = path_delays(&g);
    out.extend(path_aoas(&g));
    out
}

/// Position block of `T` (rows τ then φ, columns `x_U, y_U, x_1, y_1, …`)
/// by fourth-order central differences with step `h` metres.
pub fn fd_geometry_jacobian(scenario: &Scenario, h: f64) -> DMatrix<f64> {
    let mut points = vec![scenario.geometry.ue];
    points.extend(scenario.geometry.scatterers.iter().copied());
    let rows = 2 * points.len();
    let cols = 2 * points.len();
    let mut t = DMatrix::zeros(rows, cols);
    for v in 0..cols {
        let eval = |delta: f64| {
            let mut p = points.clone();
            p[v / 2][v % 2] += delta;
            eta_geometric(scenario, &p)
        };
        let (p1, m1, p2, m2) = (eval(h), eval(-h), eval(2.0 * h), eval(-2.0 * h));
        for u in 0..rows {
            t[(u, v)] = (8.0 * (p1[u] - m1[u]) - (p2[u] - m2[u])) / (12.0 * h);
        }
    }
    t
}
