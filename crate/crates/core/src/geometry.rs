//! Path delays, angles of arrival, gains and the path-to-position Jacobian.

use nalgebra::{DMatrix, Vector2};
use num_complex::Complex64;

use crate::scenario::{Point, Scenario, SceneGeometry, SPEED_OF_LIGHT};

fn vec2(p: Point) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

/// Per-path channel parameters; path 0 is the direct UE path, path `s`
/// the single bounce off scatterer `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
    pub gamma: Vec<Complex64>,
    /// UE–receiver range (m).
    pub r0: f64,
}

impl PathSet {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let g = &scenario.geometry;
        PathSet {
            tau: path_delays(g),
            phi: path_aoas(g),
            gamma: path_gains(scenario),
            r0: (vec2(g.ue) - vec2(g.receiver)).norm(),
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

pub fn path_delays(geometry: &SceneGeometry) -> Vec<f64> {
    let ue = vec2(geometry.ue);
    let rx = vec2(geometry.receiver);
    let mut tau = vec![(ue - rx).norm() / SPEED_OF_LIGHT];
    for q in &geometry.scatterers {
        let q = vec2(*q);
        tau.push(((ue - q).norm() + (q - rx).norm()) / SPEED_OF_LIGHT);
    }
    tau
}

pub fn path_aoas(geometry: &SceneGeometry) -> Vec<f64> {
    let rx = geometry.receiver;
    let angle = |p: Point| (p[1] - rx[1]).atan2(p[0] - rx[0]);
    std::iter::once(angle(geometry.ue))
        .chain(geometry.scatterers.iter().map(|q| angle(*q)))
        .collect()
}

/// Free-space amplitudes: `λ/(4π r)` for the direct path and
/// `ρ λ/(4π d₁ d₂)` for a scatterer with reflection coefficient `ρ`.
pub fn path_gains(scenario: &Scenario) -> Vec<Complex64> {
    let g = &scenario.geometry;
    let lambda = scenario.waveform.wavelength();
    let k = lambda / (4.0 * std::f64::consts::PI);
    let ue = vec2(g.ue);
    let rx = vec2(g.receiver);
    let mut gains = vec![Complex64::new(k / (ue - rx).norm(), 0.0)];
    for (q, rho) in g.scatterers.iter().zip(&g.reflection) {
        let q = vec2(*q);
        gains.push(rho * (k / ((ue - q).norm() * (q - rx).norm())));
    }
    gains
}

/// Index layout of the path-domain vector η = (τ, φ, γ_R, γ_I).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaLayout {
    pub paths: usize,
}

impl EtaLayout {
    pub fn new(paths: usize) -> Self {
        Self { paths }
    }
    pub fn dim(&self) -> usize {
        4 * self.paths
    }
    pub fn tau(&self, l: usize) -> usize {
        l
    }
    pub fn phi(&self, l: usize) -> usize {
        self.paths + l
    }
    pub fn gamma_re(&self, l: usize) -> usize {
        2 * self.paths + l
    }
    pub fn gamma_im(&self, l: usize) -> usize {
        3 * self.paths + l
    }
}

/// Index layout of the position-domain vector ξ = (p_U, q_1..q_S, γ_R, γ_I).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XiLayout {
    pub scatterers: usize,
}

impl XiLayout {
    pub fn new(scatterers: usize) -> Self {
        Self { scatterers }
    }
    pub fn paths(&self) -> usize {
        self.scatterers + 1
    }
    pub fn dim(&self) -> usize {
        2 * (self.scatterers + self.paths() + 1)
    }
    /// Number of position coordinates, 2(S+1).
    pub fn positions(&self) -> usize {
        2 * (self.scatterers + 1)
    }
    pub fn ue(&self) -> usize {
        0
    }
    /// First column of scatterer `s` (1-based as paths are).
    pub fn scatterer(&self, s: usize) -> usize {
        2 * s
    }
    pub fn gamma_re(&self, l: usize) -> usize {
        self.positions() + l
    }
    pub fn gamma_im(&self, l: usize) -> usize {
        self.positions() + self.paths() + l
    }
    pub fn interest(&self) -> Vec<usize> {
        (0..self.positions()).collect()
    }
    pub fn nuisance(&self) -> Vec<usize> {
        (self.positions()..self.dim()).collect()
    }
}

/// `T[u][v] = ∂η_u / ∂ξ_v`, of size 4L × 2(S+L+1).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianT {
    pub matrix: DMatrix<f64>,
    pub eta: EtaLayout,
    pub xi: XiLayout,
}

pub fn geometry_jacobian(scenario: &Scenario, paths: &PathSet) -> JacobianT {
    let g = &scenario.geometry;
    let s_count = g.scatterer_count();
    let eta = EtaLayout::new(s_count + 1);
    let xi = XiLayout::new(s_count);
    let mut t = DMatrix::zeros(eta.dim(), xi.dim());
    let c = SPEED_OF_LIGHT;
    let ue = vec2(g.ue);
    let rx = vec2(g.receiver);

    // direct path
    let (s0, c0) = paths.phi[0].sin_cos();
    t[(eta.tau(0), xi.ue())] = c0 / c;
    t[(eta.tau(0), xi.ue() + 1)] = s0 / c;
    t[(eta.phi(0), xi.ue())] = -s0 / paths.r0;
    t[(eta.phi(0), xi.ue() + 1)] = c0 / paths.r0;

    for (i, q) in g.scatterers.iter().enumerate() {
        let l = i + 1;
        let q = vec2(*q);
        let u_uq = (ue - q) / (ue - q).norm();
        let u_qd = (q - rx) / (q - rx).norm();
        let col = xi.scatterer(l);
        t[(eta.tau(l), xi.ue())] = u_uq.x / c;
        t[(eta.tau(l), xi.ue() + 1)] = u_uq.y / c;
        t[(eta.tau(l), col)] = (-u_uq.x + u_qd.x) / c;
        t[(eta.tau(l), col + 1)] = (-u_uq.y + u_qd.y) / c;
        let r = (q - rx).norm();
        let (sl, cl) = paths.phi[l].sin_cos();
        t[(eta.phi(l), col)] = -sl / r;
        t[(eta.phi(l), col + 1)] = cl / r;
    }
    for l in 0..eta.paths {
        t[(eta.gamma_re(l), xi.gamma_re(l))] = 1.0;
        t[(eta.gamma_im(l), xi.gamma_im(l))] = 1.0;
    }
    JacobianT { matrix: t, eta, xi }
}
