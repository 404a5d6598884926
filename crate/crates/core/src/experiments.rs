//! Parameter sweeps and the proposition validation report.
//!
//! Every table is written as UTF-8 CSV: `#`-prefixed metadata lines
//! (tool version, scenario hash, seed, sweep settings), one header row,
//! then one row per grid point. A point that fails keeps its row with
//! empty values and the error in the `status` column.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{self, WeightGrid};
use crate::error::{Error, Result};
use crate::fisher::FimBundle;
use crate::frontend::{self, CombinerBank, DmaConfiguration, Normalization, WaveguideModel};
use crate::geometry::{geometry_jacobian, PathSet};
use crate::linalg;
use crate::oracle;
use crate::scenario::Scenario;
use crate::signal::Manifolds;
use crate::tuner::{self, TunerSettings};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Bandwidth,
    Leakage,
    TuningBandwidth,
    Power,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Bandwidth => "bandwidth_B",
            SweepVariable::Leakage => "leakage_Lambda",
            SweepVariable::TuningBandwidth => "tuning_Btune",
            SweepVariable::Power => "power_P",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Grid in SI units (Hz, fraction, Hz, W).
    pub grid: Vec<f64>,
    /// Run the tuner at every point instead of using matched states.
    pub reoptimize: bool,
    /// Drop all scatterers before sweeping.
    pub single_path: bool,
    pub seed: u64,
    pub budget: usize,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, grid: Vec<f64>) -> Self {
        SweepSpec {
            variable,
            grid,
            reoptimize: false,
            single_path: false,
            seed: 0,
            budget: 200,
        }
    }

    /// Bandwidths 100, 200, …, 1000 MHz.
    pub fn default_bandwidth() -> Self {
        Self::new(SweepVariable::Bandwidth, (1..=10).map(|i| i as f64 * 100e6).collect())
    }

    /// Λ ∈ {0, 0.2, 0.4, 0.6, 0.8}.
    pub fn default_leakage() -> Self {
        Self::new(SweepVariable::Leakage, vec![0.0, 0.2, 0.4, 0.6, 0.8])
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sweep grid must be finite and strictly increasing".into()));
        }
        let ok = match self.variable {
            SweepVariable::Leakage => self.grid.iter().all(|&v| (0.0..=0.95).contains(&v)),
            SweepVariable::TuningBandwidth => self.grid.iter().all(|&v| v > 0.0),
            SweepVariable::Bandwidth | SweepVariable::Power => self.grid.iter().all(|&v| v > 0.0),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("grid values out of range for {}", self.variable.name())));
        }
        if self.reoptimize && self.budget == 0 {
            return Err(Error::InvalidArgument("tuner budget must be at least 1".into()));
        }
        Ok(())
    }

    fn apply(&self, scenario: &Scenario, value: f64) -> Scenario {
        match self.variable {
            SweepVariable::Bandwidth => scenario.with_bandwidth(value),
            SweepVariable::Leakage => scenario.with_leakage(value),
            SweepVariable::TuningBandwidth => scenario.with_tuning_bandwidth(value),
            SweepVariable::Power => scenario.with_power(value),
        }
    }

    fn metadata(&self, scenario: &Scenario) -> Vec<String> {
        let mut m = base_metadata(scenario, self.seed);
        m.push(format!("sweep={}", self.variable.name()));
        m.push(format!("reoptimize={}", self.reoptimize));
        if self.reoptimize {
            m.push(format!("tuner=random-search budget={} objective=peb", self.budget));
        } else {
            m.push("configuration=matched states (state j matched to path j mod L)".into());
        }
        m.push(format!("single_path={}", self.single_path));
        m
    }
}

/// Lines common to every output file.
pub fn base_metadata(scenario: &Scenario, seed: u64) -> Vec<String> {
    vec![
        format!("tool=dmasense {TOOL_VERSION}"),
        format!("scenario_hash={}", scenario.hash()),
        format!("seed={seed}"),
    ]
}

/// A table of numeric rows with a trailing status column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Empty when the point failed.
    pub values: Vec<f64>,
    pub status: String,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.values.get(i).copied().unwrap_or(f64::NAN)).collect())
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == "ok")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in &self.metadata {
            let _ = writeln!(s, "# {line}");
        }
        s += &self.columns.join(",");
        s += ",status\n";
        for row in &self.rows {
            if row.values.is_empty() {
                s += &vec![""; self.columns.len()].join(",");
            } else {
                s += &row.values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",");
            }
            let _ = writeln!(s, ",{}", row.status.replace([',', '\n'], ";"));
        }
        s
    }
}

fn configure(scenario: &Scenario, spec: &SweepSpec) -> Result<DmaConfiguration> {
    if spec.reoptimize {
        let settings = TunerSettings {
            budget: spec.budget,
            seed: spec.seed,
            ..TunerSettings::default()
        };
        Ok(tuner::optimize_peb(scenario, &settings)?.config)
    } else {
        let paths = PathSet::from_scenario(scenario);
        Ok(tuner::matched_states(scenario, &paths))
    }
}

/// Everything evaluated for one scenario and configuration.
struct Evaluation {
    paths: PathSet,
    bank: CombinerBank,
    manifolds: Manifolds,
    bundle: FimBundle,
}

fn evaluate(scenario: &Scenario, config: &DmaConfiguration) -> Result<Evaluation> {
    let paths = PathSet::from_scenario(scenario);
    let bank = CombinerBank::build(scenario, config, Normalization::PerColumn)?;
    let manifolds = Manifolds::build(scenario, &paths, &bank);
    let bundle = FimBundle::compute(scenario, &paths, &manifolds)?;
    Ok(Evaluation {
        paths,
        bank,
        manifolds,
        bundle,
    })
}

fn run_points<F>(scenario: &Scenario, spec: &SweepSpec, columns: Vec<&'static str>, point: F) -> Result<Table>
where
    F: Fn(f64, &Scenario) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let base = if spec.single_path { scenario.single_path() } else { scenario.clone() };
    let rows = crate::par::map_slice(&spec.grid, |&value| {
        let s = spec.apply(&base, value);
        match s.validate().and_then(|_| point(value, &s)) {
            Ok(values) => Row {
                values,
                status: "ok".into(),
            },
            Err(e) => Row {
                values: Vec::new(),
                status: e.to_string(),
            },
        }
    });
    Ok(Table {
        metadata: spec.metadata(&base),
        columns,
        rows,
    })
}

/// Delay information versus bandwidth (K fixed, Δf = B/K).
///
/// Columns: `B_hz, J_tautau_exact, J_tautau_effbw, PEB_exact_m,
/// PEB_ue_m, PEB_approx_m, beta_eff2_hz2, effbw_residual`. The delay
/// information is that of the direct path with its complex gain
/// eliminated; `PEB_approx_m` is the UE bound from the decoupled
/// range/cross-range approximation.
pub fn run_bandwidth_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Table> {
    let columns = vec![
        "B_hz",
        "J_tautau_exact",
        "J_tautau_effbw",
        "PEB_exact_m",
        "PEB_ue_m",
        "PEB_approx_m",
        "beta_eff2_hz2",
        "effbw_residual",
    ];
    run_points(scenario, spec, columns, |b, s| {
        let config = configure(s, spec)?;
        let e = evaluate(s, &config)?;
        let check = approx::efim_delay_check(s, &e.paths, &e.manifolds, 0)?;
        let (j_phiphi, _) = approx::single_path_aoa_efim(s, &e.paths, &e.manifolds, 0)?;
        let report = e.bundle.report()?;
        let peb_approx = approx::ue_peb_approx(check.efim_delay, j_phiphi, e.paths.phi[0], e.paths.r0)?;
        Ok(vec![
            b,
            check.efim_delay,
            check.prediction,
            report.peb,
            report.peb_ue,
            peb_approx,
            check.beta_eff2,
            check.residual,
        ])
    })
}

/// Leakage trends and the first-order leakage law.
///
/// Columns: `Lambda, A_leak, J_phiphi_exact, J_phiphi_approx, G, D_eff2_m2,
/// crb_delay_exact_s2, crb_delay_firstorder_s2, PEB_m`. `G` and `D_eff2`
/// are averages over states and subcarriers for the direct path; the
/// first-order column is the Λ = 0 delay CRB divided by `A_leak`.
pub fn run_leakage_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Table> {
    let columns = vec![
        "Lambda",
        "A_leak",
        "J_phiphi_exact",
        "J_phiphi_approx",
        "G",
        "D_eff2_m2",
        "crb_delay_exact_s2",
        "crb_delay_firstorder_s2",
        "PEB_m",
    ];
    let base = if spec.single_path { scenario.single_path() } else { scenario.clone() };
    // Λ only enters the amplitudes, so without re-optimization one
    // configuration serves every point.
    let shared = if spec.reoptimize { None } else { Some(configure(&base, spec)?) };
    // The aperture and angular diagnostics describe matched combining, so
    // they are taken from the matched tables even when the PEB columns use
    // a re-optimized configuration.
    let matched = tuner::matched_states(&base, &PathSet::from_scenario(&base));
    run_points(scenario, spec, columns, |lambda, s| {
        let config = match &shared {
            Some(c) => c.clone(),
            None => configure(s, spec)?,
        };
        let e = evaluate(s, &config)?;
        let reference = evaluate(&s.with_leakage(0.0), &config)?;
        let wg = WaveguideModel::from_hardware(&s.hardware);
        let a_leak = frontend::leakage_efficiency(&wg, s.waveform.carrier_hz, s.hardware.elements_per_chain);
        let matched_eval = if spec.reoptimize { Some(evaluate(s, &matched)?) } else { None };
        let m = matched_eval.as_ref().unwrap_or(&e);
        let angular = approx::angular_info_approx(s, &m.paths, &m.bank, &m.manifolds, 0)?;
        let diag = approx::aperture_diagnostics(s, &m.bank, &m.manifolds, 0)?;
        let report = e.bundle.report()?;
        let crb_0 = reference.bundle.report()?.crb_delay[0];
        Ok(vec![
            lambda,
            a_leak,
            angular.exact,
            angular.approx,
            diag.gain.mean(),
            diag.d_eff2.mean(),
            report.crb_delay[0],
            approx::leakage_inflated_crb(crb_0, a_leak)?,
            report.peb,
        ])
    })
}

/// PEB versus tuning bandwidth (symmetric around the carrier).
pub fn run_tuning_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Table> {
    let columns = vec!["B_tune_hz", "PEB_m", "PEB_ue_m", "crb_delay_s2", "crb_aoa_rad2"];
    run_points(scenario, spec, columns, |b, s| {
        let config = configure(s, spec)?;
        let r = evaluate(s, &config)?.bundle.report()?;
        Ok(vec![b, r.peb, r.peb_ue, r.crb_delay[0], r.crb_aoa[0]])
    })
}

/// PEB versus transmit power; `PEB·√P` is constant.
pub fn run_power_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Table> {
    let columns = vec!["P_w", "P_dbm", "PEB_m", "PEB_sqrtP"];
    run_points(scenario, spec, columns, |p, s| {
        let config = configure(s, spec)?;
        let peb = evaluate(s, &config)?.bundle.peb()?;
        Ok(vec![p, crate::scenario::watts_to_dbm(p), peb, peb * p.sqrt()])
    })
}

pub fn run_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Table> {
    match spec.variable {
        SweepVariable::Bandwidth => run_bandwidth_sweep(scenario, spec),
        SweepVariable::Leakage => run_leakage_sweep(scenario, spec),
        SweepVariable::TuningBandwidth => run_tuning_sweep(scenario, spec),
        SweepVariable::Power => run_power_sweep(scenario, spec),
    }
}

/// One line of the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub metadata: Vec<String>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in &self.metadata {
            let _ = writeln!(s, "# {line}");
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{verdict}  {:<28} residual={:.3e}  threshold={:.1e}  {}",
                c.name, c.residual, c.threshold, c.detail
            );
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in &self.metadata {
            let _ = writeln!(s, "# {line}");
        }
        s += "check,residual,threshold,passed,detail\n";
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{},{}",
                c.name,
                c.residual,
                c.threshold,
                c.passed,
                c.detail.replace([',', '\n'], ";")
            );
        }
        s
    }
}

/// Knobs of [`validate_propositions`]; the prediction formula can be
/// replaced to exercise the report itself.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub seed: u64,
    pub delay_formula: fn(&WeightGrid, &[f64]) -> Result<f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            seed: 0,
            delay_formula: approx::effective_bandwidth_delay_efim,
        }
    }
}

fn check_from(name: &'static str, threshold: f64, outcome: Result<(f64, String)>) -> Check {
    match outcome {
        Ok((residual, detail)) => Check {
            name,
            residual,
            threshold,
            passed: residual < threshold,
            detail,
        },
        Err(e) => Check {
            name,
            residual: f64::NAN,
            threshold,
            passed: false,
            detail: match e {
                Error::Unlocalizable(msg) => format!("unlocalizable: {msg}"),
                other => other.to_string(),
            },
        },
    }
}

/// Runs every identity and oracle check on `scenario` with matched states.
pub fn validate_propositions(scenario: &Scenario, options: &ValidationOptions) -> ValidationReport {
    let mut checks = Vec::new();
    let config = {
        let paths = PathSet::from_scenario(scenario);
        tuner::matched_states(scenario, &paths)
    };
    let evaluated = evaluate(scenario, &config);

    // any failure to form a finite PEB means the scene cannot be localized
    let localizable = evaluated.as_ref().map_err(clone_error).and_then(|e| {
        let peb = e.bundle.peb()?;
        let cond = linalg::equilibrated_condition(&e.bundle.j_efim);
        Ok((cond / linalg::CONDITION_LIMIT, format!("PEB={peb:.6e} m, EFIM condition={cond:.3e}")))
    });
    checks.push(check_from(
        "localizable",
        1.0,
        localizable.map_err(|e| match e {
            Error::Unlocalizable(m) => Error::Unlocalizable(m),
            other => Error::Unlocalizable(other.to_string()),
        }),
    ));

    checks.push(check_from("delay_decomposition", 1e-12, (|| {
        let e = evaluated.as_ref().map_err(clone_error)?;
        let grid = scenario.waveform.subcarrier_grid();
        let omega = approx::weights_omega(scenario, &e.paths, &e.manifolds, 0);
        let mut worst = approx::delay_info_decomposition(&omega, &grid)?.residual;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..100 {
            let values = (0..omega.values.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let w = WeightGrid::new(omega.states, omega.subcarriers, values);
            worst = worst.max(approx::delay_info_decomposition(&w, &grid)?.residual);
        }
        Ok((worst, "direct-path weights and 100 random grids".to_string()))
    })()));

    let single = scenario.single_path();
    checks.push(check_from("effective_bandwidth_efim", 1e-9, (|| {
        let paths = PathSet::from_scenario(&single);
        let cfg = tuner::matched_states(&single, &paths);
        let bank = CombinerBank::build(&single, &cfg, Normalization::PerColumn)?;
        let m = Manifolds::build(&single, &paths, &bank);
        let c = approx::efim_delay_check_with(&single, &paths, &m, 0, options.delay_formula)?;
        Ok((c.residual, format!("EFIM={:.6e} prediction={:.6e}", c.efim_delay, c.prediction)))
    })()));

    checks.push(check_from("effective_bandwidth_single_subcarrier", 1e-9, (|| {
        let mut one = single.clone();
        one.waveform.subcarriers = 1;
        let paths = PathSet::from_scenario(&one);
        let cfg = tuner::matched_states(&one, &paths);
        let bank = CombinerBank::build(&one, &cfg, Normalization::PerColumn)?;
        let m = Manifolds::build(&one, &paths, &bank);
        let (efim, j_tt) = approx::single_path_delay_efim(&one, &paths, &m, 0)?;
        Ok((efim.abs() / j_tt, "EFIM_tautau / J_tautau with K = 1".to_string()))
    })()));

    checks.push(check_from("fim_vs_finite_difference", 1e-5, (|| {
        let e = evaluated.as_ref().map_err(clone_error)?;
        let fd = oracle::fd_path_fim(scenario, &e.paths, &e.bank, oracle::FdSteps::default());
        let raw = linalg::relative_frobenius(&e.bundle.j_eta, &fd);
        let eq = oracle::equilibrated_error(&e.bundle.j_eta, &fd);
        Ok((raw.max(eq), format!("raw={raw:.3e} equilibrated={eq:.3e}")))
    })()));

    checks.push(check_from("jacobian_vs_finite_difference", 1e-6, (|| {
        let paths = PathSet::from_scenario(scenario);
        let t = geometry_jacobian(scenario, &paths);
        let fd = oracle::fd_geometry_jacobian(scenario, 1e-3);
        Ok((jacobian_error(&t.matrix, &fd), "entrywise relative, position columns".to_string()))
    })()));

    checks.push(check_from("efim_schur_vs_inverse_block", 1e-10, (|| {
        let e = evaluated.as_ref().map_err(clone_error)?;
        let full = linalg::spd_inverse(&e.bundle.j_geo, "geometry FIM")?;
        let reduced = linalg::spd_inverse(&e.bundle.j_efim, "EFIM")?;
        let idx = &e.bundle.partition.interest;
        let block = linalg::select(&full, idx, idx);
        let cond = linalg::equilibrated_condition(&e.bundle.j_geo);
        Ok((linalg::relative_frobenius(&reduced, &block), format!("cond(J_geo)={cond:.2e}")))
    })()));

    checks.push(check_from("leakage_factorization", 1e-9, (|| {
        let paths = PathSet::from_scenario(scenario);
        let mut worst: f64 = 0.0;
        for a in [0.25, 0.5, 0.8] {
            worst = worst.max(approx::leakage_factorization(scenario, &paths, &config, a)?.max_error());
        }
        let cond = evaluated.as_ref().map(|e| linalg::equilibrated_condition(&e.bundle.j_eta)).unwrap_or(f64::NAN);
        Ok((worst, format!("A in {{0.25; 0.5; 0.8}} cond(J_eta)={cond:.2e}")))
    })()));

    checks.push(check_from("lorentzian_identity", 1e-12, {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let hw = &scenario.hardware;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let f = rng.random_range(0.5..1.5) * scenario.waveform.carrier_hz;
            let f_r = rng.random_range(0.5..1.5) * scenario.waveform.carrier_hz;
            let alpha = frontend::normalized_polarizability(f, f_r, hw.damping);
            let psi = frontend::lorentzian_phase(f, f_r, hw.damping);
            let closed = frontend::lorentzian_closed_form(psi);
            worst = worst
                .max((alpha.norm() - psi.cos()).abs() / psi.cos())
                .max((alpha - closed).norm() / closed.norm());
        }
        Ok((worst, "1000 random (f; f_r)".to_string()))
    }));

    checks.push(check_from("power_noise_scaling", 1e-9, (|| {
        let e = evaluated.as_ref().map_err(clone_error)?;
        let p0 = scenario.waveform.power_w;
        let mut invariants = Vec::new();
        for factor in [0.1, 1.0, 10.0] {
            let s = scenario.with_power(p0 * factor);
            let m = Manifolds::build(&s, &e.paths, &e.bank);
            invariants.push(FimBundle::compute(&s, &e.paths, &m)?.peb()? * (p0 * factor).sqrt());
        }
        let spread = invariants.iter().map(|v| (v - invariants[1]).abs() / invariants[1]).fold(0.0, f64::max);
        let base = e.bundle.report()?;
        let noisy = scenario.with_noise(2.0 * scenario.waveform.noise_w);
        let m = Manifolds::build(&noisy, &e.paths, &e.bank);
        let doubled = FimBundle::compute(&noisy, &e.paths, &m)?.report()?;
        let crb_err = base
            .crb_delay
            .iter()
            .chain(&base.crb_aoa)
            .chain(&base.crb_position)
            .zip(doubled.crb_delay.iter().chain(&doubled.crb_aoa).chain(&doubled.crb_position))
            .map(|(a, b)| (b / a - 2.0).abs() / 2.0)
            .fold(0.0, f64::max);
        Ok((spread.max(crb_err), format!("PEB*sqrt(P) spread={spread:.3e}, CRB doubling error={crb_err:.3e}")))
    })()));

    checks.push(check_from("leakage_efficiency_monotone", 0.5, (|| {
        let hw = &scenario.hardware;
        let values: Vec<f64> = (0..=19)
            .map(|i| {
                let wg = WaveguideModel::from_hardware(&scenario.with_leakage(i as f64 * 0.05).hardware);
                frontend::leakage_efficiency(&wg, scenario.waveform.carrier_hz, hw.elements_per_chain)
            })
            .collect();
        let at_zero = (values[0] - 1.0).abs();
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        Ok((
            if decreasing && at_zero < 1e-15 { 0.0 } else { 1.0 },
            format!("A_leak(0)={:.15} A_leak(0.95)={:.6}", values[0], values[19]),
        ))
    })()));

    checks.push(check_from("angular_approx_envelope", 1.0, (|| {
        let e = evaluated.as_ref().map_err(clone_error)?;
        let a = approx::angular_info_approx(scenario, &e.paths, &e.bank, &e.manifolds, 0)?;
        // distance of the ratio from the [0.5, 2] envelope, scaled so 1 is the edge
        let r = a.ratio();
        Ok(((r.ln().abs()) / 2f64.ln(), format!("exact/approx={r:.4}")))
    })()));

    ValidationReport {
        metadata: base_metadata(scenario, options.seed),
        checks,
    }
}

/// Largest entrywise relative error over structurally nonzero entries of
/// the position block; structural zeros must match exactly.
pub fn jacobian_error(t: &DMatrix<f64>, fd_positions: &DMatrix<f64>) -> f64 {
    let paths = fd_positions.nrows() / 2;
    let mut worst: f64 = 0.0;
    for u in 0..fd_positions.nrows() {
        for v in 0..fd_positions.ncols() {
            let analytic = t[(u, v)];
            let reference = fd_positions[(u, v)];
            let err = if analytic == 0.0 {
                if reference == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (analytic - reference).abs() / analytic.abs()
            };
            worst = worst.max(err);
        }
    }
    debug_assert_eq!(t.nrows(), 4 * paths);
    worst
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Unlocalizable(m) => Error::Unlocalizable(m.clone()),
        other => Error::Validation(other.to_string()),
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let va: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mean).powi(2)).sum();
    cov / (va * vb).sqrt()
}
