//! Experiment description: waveform, DMA hardware, scene geometry.
//!
//! Scenarios are read from a TOML file with four optional tables
//! (`[waveform]`, `[hardware]`, `[geometry]`, `[dma]`). Any key that is
//! absent takes the reference default (see [`Scenario::reference`]).
//! Power-like keys accept either a `_w` or a `_dbm` variant; the saved form
//! always uses watts so that `save(load(file))` is bit-exact.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Point = [f64; 2];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    /// Transmit power per subcarrier (W).
    pub power_w: f64,
    /// Pilot symbols per block. Pilot energy is normalized out after
    /// pilot removal, so bounds do not depend on it.
    pub pilots: usize,
    /// Post-combining noise power per entry (W).
    pub noise_w: f64,
}

impl Waveform {
    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Frequency of subcarrier `k` (0-based).
    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        let offset = (k as f64 + 1.0) - (self.subcarriers as f64 + 1.0) / 2.0;
        self.carrier_hz + offset * self.subcarrier_spacing_hz
    }

    pub fn subcarrier_grid(&self) -> Vec<f64> {
        (0..self.subcarriers).map(|k| self.subcarrier_hz(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaHardware {
    pub rf_chains: usize,
    pub elements_per_chain: usize,
    pub element_spacing_m: f64,
    /// Damping factor Γ (rad·Hz).
    pub damping: f64,
    /// Coupling coefficient F of the polarizability law.
    pub coupling: f64,
    /// Fixed element-to-RF-chain coefficients `c_{n,m}`, one per element.
    pub coupling_coeffs: Vec<Complex64>,
    pub tuning_min_hz: f64,
    pub tuning_max_hz: f64,
    /// Fraction of guided power lost along one microstrip, Λ ∈ [0, 1).
    pub leakage_fraction: f64,
    /// Effective waveguide permittivity used for the phase constant.
    pub eps_eff: f64,
}

impl DmaHardware {
    pub fn elements(&self) -> usize {
        self.rf_chains * self.elements_per_chain
    }

    pub fn tuning_bandwidth_hz(&self) -> f64 {
        self.tuning_max_hz - self.tuning_min_hz
    }

    /// Microstrip (0-based) that feeds element `n` (0-based).
    pub fn microstrip_of(&self, n: usize) -> usize {
        n / self.elements_per_chain
    }

    /// Position of element `n` along its own microstrip (0 = feed end).
    pub fn local_index(&self, n: usize) -> usize {
        n % self.elements_per_chain
    }

    pub fn microstrip_length_m(&self) -> f64 {
        self.elements_per_chain as f64 * self.element_spacing_m
    }

    pub fn quality_factor(&self, f: f64) -> f64 {
        2.0 * std::f64::consts::PI * f / self.damping
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub receiver: Point,
    pub ue: Point,
    pub scatterers: Vec<Point>,
    pub reflection: Vec<Complex64>,
}

impl SceneGeometry {
    pub fn scatterer_count(&self) -> usize {
        self.scatterers.len()
    }

    pub fn path_count(&self) -> usize {
        self.scatterers.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub waveform: Waveform,
    pub hardware: DmaHardware,
    pub geometry: SceneGeometry,
    /// Number of DMA phase configurations J.
    pub states: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::reference()
    }
}

impl Scenario {
    /// Reference setup: 20 GHz carrier, 32 elements on 4 microstrips,
    /// 128 subcarriers over 500 MHz, Q = 100, half-wavelength spacing,
    /// 500 MHz tuning range centred on the carrier, 10 dBm, Λ = 0.8,
    /// four DMA states, UE at (3, 3) m and scatterers at (5, 3) and (4, 4) m.
    pub fn reference() -> Self {
        let carrier_hz = 20e9;
        let subcarriers = 128;
        let bandwidth = 500e6;
        let quality = 100.0;
        let rf_chains = 4;
        let elements_per_chain = 8;
        let tuning = 500e6;
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Scenario {
            waveform: Waveform {
                carrier_hz,
                subcarrier_spacing_hz: bandwidth / subcarriers as f64,
                subcarriers,
                power_w: dbm_to_watts(10.0),
                pilots: 1,
                noise_w: dbm_to_watts(-100.0),
            },
            hardware: DmaHardware {
                rf_chains,
                elements_per_chain,
                element_spacing_m: wavelength / 2.0,
                damping: 2.0 * std::f64::consts::PI * carrier_hz / quality,
                coupling: 1.0,
                coupling_coeffs: vec![Complex64::new(1.0, 0.0); rf_chains * elements_per_chain],
                tuning_min_hz: carrier_hz - tuning / 2.0,
                tuning_max_hz: carrier_hz + tuning / 2.0,
                leakage_fraction: 0.8,
                eps_eff: 3.0,
            },
            geometry: SceneGeometry {
                receiver: [0.0, 0.0],
                ue: [3.0, 3.0],
                scatterers: vec![[5.0, 3.0], [4.0, 4.0]],
                reflection: vec![Complex64::new(1.0, 0.0); 2],
            },
            states: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.waveform;
        let h = &self.hardware;
        let g = &self.geometry;
        let fail = |msg: String| Err(Error::Validation(msg));

        if !(w.carrier_hz > 0.0) {
            return fail("carrier frequency must be positive".into());
        }
        if !(w.subcarrier_spacing_hz > 0.0) {
            return fail("subcarrier spacing must be positive".into());
        }
        if w.subcarriers == 0 {
            return fail("at least one subcarrier is required".into());
        }
        if !(w.subcarrier_hz(0) > 0.0) {
            return fail("lowest subcarrier frequency must be positive".into());
        }
        if !(w.power_w > 0.0) {
            return fail("transmit power must be positive".into());
        }
        if w.pilots == 0 {
            return fail("at least one pilot symbol is required".into());
        }
        if !(w.noise_w > 0.0) {
            return fail("noise power must be positive".into());
        }

        if h.rf_chains == 0 || h.elements_per_chain == 0 {
            return fail("rf_chains and elements_per_chain must be at least 1".into());
        }
        if !(h.element_spacing_m > 0.0) {
            return fail("element spacing must be positive".into());
        }
        if !(h.damping > 0.0) {
            return fail("damping factor must be positive".into());
        }
        if !h.coupling.is_finite() || h.coupling == 0.0 {
            return fail("coupling coefficient must be finite and nonzero".into());
        }
        if h.coupling_coeffs.len() != h.elements() {
            return fail(format!(
                "coupling_coeffs has {} entries, expected {}",
                h.coupling_coeffs.len(),
                h.elements()
            ));
        }
        if h.tuning_min_hz > h.tuning_max_hz {
            return fail("tuning limits inverted".into());
        }
        if !(h.tuning_max_hz > h.tuning_min_hz) {
            return fail("tuning bandwidth must be positive".into());
        }
        if !(h.tuning_min_hz > 0.0) {
            return fail("tuning limits must be positive".into());
        }
        if !(0.0..1.0).contains(&h.leakage_fraction) {
            return fail("leakage fraction must lie in [0, 1)".into());
        }
        if !(h.eps_eff > 0.0) {
            return fail("effective permittivity must be positive".into());
        }

        if self.states == 0 {
            return fail("at least one DMA state is required".into());
        }

        if g.reflection.len() != g.scatterers.len() {
            return fail(format!(
                "{} reflection coefficients for {} scatterers",
                g.reflection.len(),
                g.scatterers.len()
            ));
        }
        let mut points = vec![("receiver".to_string(), g.receiver), ("ue".to_string(), g.ue)];
        for (i, q) in g.scatterers.iter().enumerate() {
            points.push((format!("scatterer {}", i + 1), *q));
        }
        for (name, p) in &points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return fail(format!("{name} position is not finite"));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let (a, b) = (&points[i], &points[j]);
                if a.1 == b.1 {
                    return fail(format!("{} and {} are collocated", a.0, b.0));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let scenario = raw.resolve()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawScenario::from(self);
        toml::to_string(&raw).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    // Builder-style variations used by sweeps.

    /// Keeps only the direct path.
    pub fn single_path(&self) -> Self {
        let mut s = self.clone();
        s.geometry.scatterers.clear();
        s.geometry.reflection.clear();
        s
    }

    /// Sets B = K·Δf by changing Δf at fixed K.
    pub fn with_bandwidth(&self, bandwidth_hz: f64) -> Self {
        let mut s = self.clone();
        s.waveform.subcarrier_spacing_hz = bandwidth_hz / s.waveform.subcarriers as f64;
        s
    }

    pub fn with_leakage(&self, leakage_fraction: f64) -> Self {
        let mut s = self.clone();
        s.hardware.leakage_fraction = leakage_fraction;
        s
    }

    pub fn with_power(&self, power_w: f64) -> Self {
        let mut s = self.clone();
        s.waveform.power_w = power_w;
        s
    }

    pub fn with_noise(&self, noise_w: f64) -> Self {
        let mut s = self.clone();
        s.waveform.noise_w = noise_w;
        s
    }

    /// Tuning range of width `b_tune` centred on the carrier.
    pub fn with_tuning_bandwidth(&self, b_tune: f64) -> Self {
        let mut s = self.clone();
        let fc = s.waveform.carrier_hz;
        s.hardware.tuning_min_hz = fc - b_tune / 2.0;
        s.hardware.tuning_max_hz = fc + b_tune / 2.0;
        s
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    waveform: RawWaveform,
    #[serde(default)]
    hardware: RawHardware,
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    dma: RawDma,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaveform {
    #[serde(skip_serializing_if = "Option::is_none")]
    carrier_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subcarriers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subcarrier_spacing_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pilots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_dbm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHardware {
    #[serde(skip_serializing_if = "Option::is_none")]
    rf_chains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elements_per_chain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    element_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quality_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling_coeffs: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning_min_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning_max_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning_bandwidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leakage_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_eff: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    #[serde(skip_serializing_if = "Option::is_none")]
    receiver: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ue: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scatterers: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reflection: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDma {
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
}

fn exclusive<T>(a: Option<T>, b: Option<T>, names: &str) -> Result<Option<(T, bool)>> {
    match (a, b) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("only one of {names} may be given"))),
        (Some(x), None) => Ok(Some((x, true))),
        (None, Some(y)) => Ok(Some((y, false))),
        (None, None) => Ok(None),
    }
}

impl RawScenario {
    fn resolve(self) -> Result<Scenario> {
        let mut s = Scenario::reference();
        let w = self.waveform;
        if let Some(v) = w.carrier_hz {
            s.waveform.carrier_hz = v;
        }
        if let Some(v) = w.subcarriers {
            s.waveform.subcarriers = v;
        }
        let default_bandwidth = 500e6;
        match exclusive(w.subcarrier_spacing_hz, w.bandwidth_hz, "subcarrier_spacing_hz, bandwidth_hz")? {
            Some((v, true)) => s.waveform.subcarrier_spacing_hz = v,
            Some((b, false)) => s.waveform.subcarrier_spacing_hz = b / s.waveform.subcarriers.max(1) as f64,
            None => s.waveform.subcarrier_spacing_hz = default_bandwidth / s.waveform.subcarriers.max(1) as f64,
        }
        match exclusive(w.power_w, w.power_dbm, "power_w, power_dbm")? {
            Some((v, true)) => s.waveform.power_w = v,
            Some((v, false)) => s.waveform.power_w = dbm_to_watts(v),
            None => {}
        }
        if let Some(v) = w.pilots {
            s.waveform.pilots = v;
        }
        match exclusive(w.noise_w, w.noise_dbm, "noise_w, noise_dbm")? {
            Some((v, true)) => s.waveform.noise_w = v,
            Some((v, false)) => s.waveform.noise_w = dbm_to_watts(v),
            None => {}
        }

        // Hardware defaults that scale with the carrier are re-derived from it.
        let fc = s.waveform.carrier_hz;
        let h = self.hardware;
        if let Some(v) = h.rf_chains {
            s.hardware.rf_chains = v;
        }
        if let Some(v) = h.elements_per_chain {
            s.hardware.elements_per_chain = v;
        }
        s.hardware.element_spacing_m = h.element_spacing_m.unwrap_or(SPEED_OF_LIGHT / fc / 2.0);
        match exclusive(h.damping, h.quality_factor, "damping, quality_factor")? {
            Some((v, true)) => s.hardware.damping = v,
            Some((q, false)) => s.hardware.damping = 2.0 * std::f64::consts::PI * fc / q,
            None => s.hardware.damping = 2.0 * std::f64::consts::PI * fc / 100.0,
        }
        if let Some(v) = h.coupling {
            s.hardware.coupling = v;
        }
        s.hardware.coupling_coeffs = match h.coupling_coeffs {
            Some(v) => v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
            None => vec![Complex64::new(1.0, 0.0); s.hardware.elements()],
        };
        let tuning_bw = h.tuning_bandwidth_hz.unwrap_or(500e6);
        if h.tuning_bandwidth_hz.is_some() && (h.tuning_min_hz.is_some() || h.tuning_max_hz.is_some()) {
            return Err(Error::Parse(
                "tuning_bandwidth_hz cannot be combined with tuning_min_hz/tuning_max_hz".into(),
            ));
        }
        s.hardware.tuning_min_hz = h.tuning_min_hz.unwrap_or(fc - tuning_bw / 2.0);
        s.hardware.tuning_max_hz = h.tuning_max_hz.unwrap_or(fc + tuning_bw / 2.0);
        if let Some(v) = h.leakage_fraction {
            s.hardware.leakage_fraction = v;
        }
        if let Some(v) = h.eps_eff {
            s.hardware.eps_eff = v;
        }

        let g = self.geometry;
        if let Some(v) = g.receiver {
            s.geometry.receiver = v;
        }
        if let Some(v) = g.ue {
            s.geometry.ue = v;
        }
        if let Some(v) = g.scatterers {
            s.geometry.scatterers = v;
        }
        s.geometry.reflection = match g.reflection {
            Some(v) => v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
            None => vec![Complex64::new(1.0, 0.0); s.geometry.scatterers.len()],
        };

        if let Some(v) = self.dma.states {
            s.states = v;
        }
        Ok(s)
    }
}

impl From<&Scenario> for RawScenario {
    fn from(s: &Scenario) -> Self {
        let c2 = |c: &Complex64| [c.re, c.im];
        RawScenario {
            waveform: RawWaveform {
                carrier_hz: Some(s.waveform.carrier_hz),
                subcarriers: Some(s.waveform.subcarriers),
                subcarrier_spacing_hz: Some(s.waveform.subcarrier_spacing_hz),
                power_w: Some(s.waveform.power_w),
                pilots: Some(s.waveform.pilots),
                noise_w: Some(s.waveform.noise_w),
                ..Default::default()
            },
            hardware: RawHardware {
                rf_chains: Some(s.hardware.rf_chains),
                elements_per_chain: Some(s.hardware.elements_per_chain),
                element_spacing_m: Some(s.hardware.element_spacing_m),
                damping: Some(s.hardware.damping),
                coupling: Some(s.hardware.coupling),
                coupling_coeffs: Some(s.hardware.coupling_coeffs.iter().map(c2).collect()),
                tuning_min_hz: Some(s.hardware.tuning_min_hz),
                tuning_max_hz: Some(s.hardware.tuning_max_hz),
                leakage_fraction: Some(s.hardware.leakage_fraction),
                eps_eff: Some(s.hardware.eps_eff),
                ..Default::default()
            },
            geometry: RawGeometry {
                receiver: Some(s.geometry.receiver),
                ue: Some(s.geometry.ue),
                scatterers: Some(s.geometry.scatterers.clone()),
                reflection: Some(s.geometry.reflection.iter().map(c2).collect()),
            },
            dma: RawDma {
                states: Some(s.states),
            },
        }
    }
}
