//! DMA front end: Lorentzian element response, microstrip propagation and
//! leakage, and assembly of the analog combiners `W_j[k]`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::scenario::{DmaHardware, Scenario, SPEED_OF_LIGHT};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `2π(f_r² − f²)`, factored to keep precision near resonance.
fn detuning(f: f64, f_r: f64) -> f64 {
    2.0 * PI * (f_r - f) * (f_r + f)
}

/// Raw magnetic polarizability `2πf²F / (2πf_r² − 2πf² + jΓf)`.
pub fn polarizability(f: f64, f_r: f64, damping: f64, coupling: f64) -> Complex64 {
    Complex64::new(2.0 * PI * f * f * coupling, 0.0) / Complex64::new(detuning(f, f_r), damping * f)
}

/// Polarizability divided by `Q(f)·F`, with `Q(f) = 2πf/Γ`.
pub fn normalized_polarizability(f: f64, f_r: f64, damping: f64) -> Complex64 {
    Complex64::new(damping * f, 0.0) / Complex64::new(detuning(f, f_r), damping * f)
}

/// Lorentzian phase Ψ = arctan(2π(f_r² − f²)/(Γf)), in (−π/2, π/2).
pub fn lorentzian_phase(f: f64, f_r: f64, damping: f64) -> f64 {
    detuning(f, f_r).atan2(damping * f)
}

/// Resonant frequency whose Lorentzian phase at `f` equals `psi`.
///
/// Returns `None` when the required `f_r²` is not positive.
pub fn resonance_for_phase(f: f64, psi: f64, damping: f64) -> Option<f64> {
    let fr2 = f * f + damping * f * psi.tan() / (2.0 * PI);
    (fr2 > 0.0 && psi.abs() < PI / 2.0).then(|| fr2.sqrt())
}

/// Whether the combiner columns are scaled to unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    PerColumn,
    /// Raw weights; used to check the leakage factorization.
    None,
}

/// Microstrip propagation constants.
///
/// The phase constant is `2πf√ε_eff/c`. Attenuation is frequency flat and
/// tied to the leakage fraction Λ by `exp(−2ᾱ_g·N_E·d_x) = 1 − Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideModel {
    /// ᾱ_g (Np/m).
    pub attenuation: f64,
    pub eps_eff: f64,
    pub element_spacing_m: f64,
    pub elements_per_chain: usize,
}

impl WaveguideModel {
    pub fn from_hardware(hw: &DmaHardware) -> Self {
        WaveguideModel {
            attenuation: attenuation_for_leakage(hw.leakage_fraction, hw.microstrip_length_m()),
            eps_eff: hw.eps_eff,
            element_spacing_m: hw.element_spacing_m,
            elements_per_chain: hw.elements_per_chain,
        }
    }

    pub fn phase_constant(&self, f: f64) -> f64 {
        2.0 * PI * f * self.eps_eff.sqrt() / SPEED_OF_LIGHT
    }

    pub fn attenuation_at(&self, _f: f64) -> f64 {
        self.attenuation
    }

    /// `ℓ_{n,m}`: distance from element `n` to the feed of its microstrip.
    pub fn path_length(&self, n: usize) -> f64 {
        (n % self.elements_per_chain) as f64 * self.element_spacing_m
    }

    /// `exp(−(ᾱ_g + jβ_g)·length)`.
    pub fn propagation(&self, f: f64, length: f64) -> Complex64 {
        (-Complex64::new(self.attenuation_at(f), self.phase_constant(f)) * length).exp()
    }

    /// Waveguide factor between element `n` and RF chain `m`.
    pub fn response(&self, f: f64, n: usize, m: usize) -> Result<Complex64> {
        if n / self.elements_per_chain != m {
            return Err(Error::NotOnMicrostrip {
                element: n,
                microstrip: m,
            });
        }
        Ok(self.propagation(f, self.path_length(n)))
    }
}

/// ᾱ_g such that a fraction `leakage` of the guided power is lost over `length`.
pub fn attenuation_for_leakage(leakage: f64, length: f64) -> f64 {
    -(1.0 - leakage).ln() / (2.0 * length)
}

/// Normalized leakage efficiency `|Σh_n|² / (N Σ|h_n|²)` of the
/// attenuation-only profile `h_n = exp(−ᾱ_g (n−1) d_x)`.
pub fn leakage_efficiency(wg: &WaveguideModel, f: f64, elements: usize) -> f64 {
    let a = wg.attenuation_at(f);
    let (sum, sum_sq) = (0..elements).fold((0.0, 0.0), |(s, s2), n| {
        let h = (-a * n as f64 * wg.element_spacing_m).exp();
        (s + h, s2 + h * h)
    });
    sum * sum / (elements as f64 * sum_sq)
}

/// Per-state resonant frequencies, `resonances[j][n]` in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaConfiguration {
    pub resonances: Vec<Vec<f64>>,
}

impl DmaConfiguration {
    /// Every element of every state resonates at `f_r`.
    pub fn uniform(states: usize, elements: usize, f_r: f64) -> Self {
        DmaConfiguration {
            resonances: vec![vec![f_r; elements]; states],
        }
    }

    pub fn states(&self) -> usize {
        self.resonances.len()
    }

    pub fn check(&self, hw: &DmaHardware) -> Result<()> {
        for (j, state) in self.resonances.iter().enumerate() {
            if state.len() != hw.elements() {
                return Err(Error::Dimension(format!(
                    "state {j} has {} resonances, expected {}",
                    state.len(),
                    hw.elements()
                )));
            }
            for (n, &f_r) in state.iter().enumerate() {
                if !(f_r >= hw.tuning_min_hz && f_r <= hw.tuning_max_hz) {
                    return Err(Error::TuningLimit {
                        state: j,
                        element: n,
                        value: f_r,
                        min: hw.tuning_min_hz,
                        max: hw.tuning_max_hz,
                    });
                }
            }
        }
        Ok(())
    }

    /// Writes `j,n,m,f_r_hz` rows (all indices 0-based).
    pub fn write_csv<W: Write>(&self, hw: &DmaHardware, out: &mut W, metadata: &[String]) -> std::io::Result<()> {
        for line in metadata {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "j,n,m,f_r_hz")?;
        for (j, state) in self.resonances.iter().enumerate() {
            for (n, f_r) in state.iter().enumerate() {
                writeln!(out, "{j},{n},{},{f_r:e}", hw.microstrip_of(n))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "j,n,m,f_r_hz" {
                    return Err(Error::Parse(format!("unexpected header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("malformed row {} '{line}'", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let j: usize = fields[0].parse().map_err(|_| bad())?;
            let n: usize = fields[1].parse().map_err(|_| bad())?;
            let f_r: f64 = fields[3].parse().map_err(|_| bad())?;
            rows.push((j, n, f_r));
        }
        let states = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let elements = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut resonances = vec![vec![f64::NAN; elements]; states];
        for (j, n, f_r) in rows {
            resonances[j][n] = f_r;
        }
        if resonances.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Parse("resonance table has missing entries".into()));
        }
        Ok(DmaConfiguration { resonances })
    }
}

/// Builds `W_j[k]` (N × N_RF) for one state at one subcarrier frequency.
///
/// Entry `(n, m)` is `c_n · exp(−(ᾱ_g + jβ_g)ℓ_n) · ᾱ_M(f_k, f_r,n)` when
/// element `n` sits on microstrip `m` and zero otherwise.
pub fn build_combiner(
    hw: &DmaHardware,
    wg: &WaveguideModel,
    resonances: &[f64],
    f_k: f64,
    normalization: Normalization,
) -> Result<DMatrix<Complex64>> {
    let n_el = hw.elements();
    if resonances.len() != n_el {
        return Err(Error::Dimension(format!(
            "{} resonances for {n_el} elements",
            resonances.len()
        )));
    }
    let mut w = DMatrix::<Complex64>::zeros(n_el, hw.rf_chains);
    for (n, &f_r) in resonances.iter().enumerate() {
        if !(f_r >= hw.tuning_min_hz && f_r <= hw.tuning_max_hz) {
            return Err(Error::TuningLimit {
                state: 0,
                element: n,
                value: f_r,
                min: hw.tuning_min_hz,
                max: hw.tuning_max_hz,
            });
        }
        let m = hw.microstrip_of(n);
        w[(n, m)] = hw.coupling_coeffs[n] * wg.response(f_k, n, m)? * normalized_polarizability(f_k, f_r, hw.damping);
    }
    for m in 0..hw.rf_chains {
        let norm = w.column(m).norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroColumn { column: m });
        }
        if normalization == Normalization::PerColumn {
            w.column_mut(m).unscale_mut(norm);
        }
    }
    Ok(w)
}

/// All combiners `W_j[k]`, indexed `j * K + k`.
#[derive(Debug, Clone)]
pub struct CombinerBank {
    pub states: usize,
    pub subcarriers: usize,
    matrices: Vec<DMatrix<Complex64>>,
}

impl CombinerBank {
    pub fn build(scenario: &Scenario, config: &DmaConfiguration, normalization: Normalization) -> Result<Self> {
        let hw = &scenario.hardware;
        config.check(hw)?;
        let wg = WaveguideModel::from_hardware(hw);
        let k_count = scenario.waveform.subcarriers;
        let states = config.states();
        let built = par::map_indexed(states * k_count, |idx| {
            let (j, k) = (idx / k_count, idx % k_count);
            build_combiner(hw, &wg, &config.resonances[j], scenario.waveform.subcarrier_hz(k), normalization)
        });
        let matrices = built.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(CombinerBank {
            states,
            subcarriers: k_count,
            matrices,
        })
    }

    pub fn get(&self, j: usize, k: usize) -> &DMatrix<Complex64> {
        &self.matrices[j * self.subcarriers + k]
    }

    /// Multiplies every entry of state `j` by `factor`.
    pub fn scale_state(&mut self, j: usize, factor: f64) {
        for k in 0..self.subcarriers {
            self.matrices[j * self.subcarriers + k].scale_mut(factor);
        }
    }

    /// Writes `j,k,n,m,re,im` rows for the nonzero entries.
    pub fn write_csv<W: Write>(&self, out: &mut W, metadata: &[String]) -> std::io::Result<()> {
        for line in metadata {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "j,k,n,m,re,im")?;
        for j in 0..self.states {
            for k in 0..self.subcarriers {
                let w = self.get(j, k);
                for n in 0..w.nrows() {
                    for m in 0..w.ncols() {
                        let v = w[(n, m)];
                        if v != Complex64::new(0.0, 0.0) {
                            writeln!(out, "{j},{k},{n},{m},{:e},{:e}", v.re, v.im)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `−j·cosΨ·e^{jΨ}`, the closed form of the normalized response.
pub fn lorentzian_closed_form(psi: f64) -> Complex64 {
    -J * psi.cos() * Complex64::from_polar(1.0, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_i() -> Scenario {
        Scenario::reference()
    }

    #[test]
    fn polarizability_on_resonance() {
        let s = table_i();
        let g = s.hardware.damping;
        let a = polarizability(20e9, 20e9, g, 1.0);
        assert!(a.re.abs() < 1e-9);
        assert!((a.im + 100.0).abs() < 1e-9, "{a}");
        let f = 19e9;
        let on = polarizability(f, f, g, 0.7);
        let q = s.hardware.quality_factor(f);
        assert!((on - Complex64::new(0.0, -q * 0.7)).norm() < 1e-9);
        assert!(polarizability(1.0, 20e9, g, 1.0).norm() < 1e-15);
    }

    #[test]
    fn normalized_matches_raw_over_qf() {
        let s = table_i();
        let g = s.hardware.damping;
        for (f, fr) in [(19.9e9, 20.1e9), (20e9, 20e9), (21e9, 19.5e9)] {
            let raw = polarizability(f, fr, g, 2.5) / (s.hardware.quality_factor(f) * 2.5);
            let nrm = normalized_polarizability(f, fr, g);
            assert!((raw - nrm).norm() < 1e-14);
        }
        assert_eq!(normalized_polarizability(20e9, 20e9, g), Complex64::new(0.0, -1.0));
        assert!(normalized_polarizability(20e9, 1e12, g).norm() < 1e-4);
    }

    #[test]
    fn lorentzian_phase_values() {
        let g = table_i().hardware.damping;
        assert_eq!(lorentzian_phase(20e9, 20e9, g), 0.0);
        assert!((lorentzian_phase(20e9, 1e14, g) - PI / 2.0).abs() < 1e-6);
        // choose f_r so that 2π(f_r² − f²)/(Γf) = 1
        let f = 20e9;
        let fr = (f * f + g * f / (2.0 * PI)).sqrt();
        assert!((lorentzian_phase(f, fr, g) - PI / 4.0).abs() < 1e-9);
        assert!((resonance_for_phase(f, PI / 4.0, g).unwrap() - fr).abs() < 1e-3);
    }

    #[test]
    fn lorentzian_identity_random() {
        let g = table_i().hardware.damping;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let f = rng.random_range(15e9..25e9);
            let fr = rng.random_range(15e9..25e9);
            let a = normalized_polarizability(f, fr, g);
            let psi = lorentzian_phase(f, fr, g);
            assert!(psi.abs() < PI / 2.0);
            assert!((a.norm() - psi.cos()).abs() <= 1e-12 * psi.cos());
            assert!((a - lorentzian_closed_form(psi)).norm() <= 1e-12 * a.norm());
        }
    }

    #[test]
    fn phase_increases_with_resonance() {
        let g = table_i().hardware.damping;
        let mut prev = -PI;
        for i in 0..200 {
            let fr = 19e9 + i as f64 * 10e6;
            let p = lorentzian_phase(20e9, fr, g);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn waveguide_factors() {
        let s = table_i();
        let wg = WaveguideModel::from_hardware(&s.hardware);
        assert_eq!(wg.response(20e9, 0, 0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(wg.response(20e9, 8, 1).unwrap(), Complex64::new(1.0, 0.0));
        assert!(wg.response(20e9, 8, 0).is_err());
        let far = wg.propagation(20e9, s.hardware.microstrip_length_m());
        assert!((far.norm_sqr() - 0.2).abs() < 1e-12);
        let lossless = WaveguideModel::from_hardware(&s.with_leakage(0.0).hardware);
        assert!((lossless.response(20e9, 5, 0).unwrap().norm() - 1.0).abs() < 1e-15);
        let mag = wg.response(20e9, 7, 0).unwrap().norm();
        assert!(mag > 0.0 && mag <= 1.0);
    }

    #[test]
    fn leakage_efficiency_cases() {
        let s = table_i();
        let mut wg = WaveguideModel::from_hardware(&s.with_leakage(0.0).hardware);
        assert_eq!(leakage_efficiency(&wg, 20e9, 8), 1.0);
        wg.attenuation = 3.0;
        assert!((leakage_efficiency(&wg, 20e9, 1) - 1.0).abs() < 1e-15);
        // h = [1, 0.5]
        wg.attenuation = 2f64.ln() / wg.element_spacing_m;
        assert!((leakage_efficiency(&wg, 20e9, 2) - 0.9).abs() < 1e-14);
        // non-increasing in attenuation
        let mut prev = 1.0;
        for i in 0..50 {
            wg.attenuation = i as f64;
            let a = leakage_efficiency(&wg, 20e9, 8);
            assert!(a <= prev + 1e-15);
            prev = a;
        }
    }

    #[test]
    fn single_element_combiner() {
        let mut s = table_i().with_leakage(0.0);
        s.hardware.rf_chains = 1;
        s.hardware.elements_per_chain = 1;
        s.hardware.coupling_coeffs = vec![Complex64::new(1.0, 0.0)];
        let wg = WaveguideModel::from_hardware(&s.hardware);
        for norm in [Normalization::None, Normalization::PerColumn] {
            let w = build_combiner(&s.hardware, &wg, &[20e9], 20e9, norm).unwrap();
            assert!((w[(0, 0)] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn combiner_orthonormal_with_fixed_support() {
        let s = table_i();
        let wg = WaveguideModel::from_hardware(&s.hardware);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hw = &s.hardware;
        for _ in 0..20 {
            let fr: Vec<f64> = (0..32).map(|_| rng.random_range(hw.tuning_min_hz..=hw.tuning_max_hz)).collect();
            let f = rng.random_range(19.5e9..20.5e9);
            let w = build_combiner(hw, &wg, &fr, f, Normalization::PerColumn).unwrap();
            let gram = w.adjoint() * &w;
            let err = (gram - DMatrix::<Complex64>::identity(4, 4)).norm();
            assert!(err < 1e-10);
            for n in 0..32 {
                for m in 0..4 {
                    assert_eq!(w[(n, m)] == Complex64::new(0.0, 0.0), hw.microstrip_of(n) != m);
                }
            }
        }
    }

    #[test]
    fn combiner_rejects_out_of_range() {
        let s = table_i();
        let wg = WaveguideModel::from_hardware(&s.hardware);
        let mut fr = vec![20e9; 32];
        fr[3] = 25e9;
        assert!(matches!(
            build_combiner(&s.hardware, &wg, &fr, 20e9, Normalization::PerColumn),
            Err(Error::TuningLimit { element: 3, .. })
        ));
        let mut hw = s.hardware.clone();
        for n in 0..8 {
            hw.coupling_coeffs[n] = Complex64::new(0.0, 0.0);
        }
        assert!(matches!(
            build_combiner(&hw, &wg, &vec![20e9; 32], 20e9, Normalization::PerColumn),
            Err(Error::ZeroColumn { column: 0 })
        ));
    }

    #[test]
    fn combiner_continuous_in_resonance() {
        let s = table_i();
        let wg = WaveguideModel::from_hardware(&s.hardware);
        let fr = vec![20.05e9; 32];
        let fr2: Vec<f64> = fr.iter().map(|f| f + 900.0).collect();
        let a = build_combiner(&s.hardware, &wg, &fr, 20e9, Normalization::PerColumn).unwrap();
        let b = build_combiner(&s.hardware, &wg, &fr2, 20e9, Normalization::PerColumn).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            if x.norm() > 0.0 {
                assert!((x - y).norm() / x.norm() < 1e-3);
            }
        }
    }

    #[test]
    fn resonance_csv_round_trip() {
        let s = table_i();
        let cfg = DmaConfiguration::uniform(4, 32, 20.01e9);
        let mut buf = Vec::new();
        cfg.write_csv(&s.hardware, &mut buf, &["tool=test".into()]).unwrap();
        let back = DmaConfiguration::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bank_dump_has_header_and_support_rows() {
        let s = table_i();
        let mut small = s.clone();
        small.waveform.subcarriers = 2;
        let cfg = DmaConfiguration::uniform(1, 32, 20e9);
        let bank = CombinerBank::build(&small, &cfg, Normalization::PerColumn).unwrap();
        let mut buf = Vec::new();
        bank.write_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("j,k,n,m,re,im"));
        assert_eq!(lines.count(), 2 * 32);
    }
}
