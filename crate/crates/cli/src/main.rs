use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dmasense::experiments::{self, SweepSpec, SweepVariable, ValidationOptions};
use dmasense::frontend::{CombinerBank, DmaConfiguration, Normalization};
use dmasense::scenario::dbm_to_watts;
use dmasense::signal::Manifolds;
use dmasense::tuner::{self, TunerSettings};
use dmasense::{FimBundle, PathSet, Scenario};

mod plot;

#[derive(Parser, Debug)]
#[command(name = "dmasense", version, about = "Localization bounds for DMA receivers")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the reference scenario as a config file.
    Defaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate CRBs and PEB for one scenario.
    Peb(Common),
    /// PEB and delay information versus signal bandwidth.
    SweepBandwidth {
        #[command(flatten)]
        common: Common,
        /// Bandwidths in MHz (default 100,200,...,1000).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Leakage diagnostics and PEB versus leakage fraction.
    SweepLeakage {
        #[command(flatten)]
        common: Common,
        /// Leakage fractions in [0, 0.95] (default 0,0.2,0.4,0.6,0.8).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// PEB versus tuning bandwidth, centred on the carrier.
    SweepTuning {
        #[command(flatten)]
        common: Common,
        /// Tuning bandwidths in MHz.
        #[arg(long, value_delimiter = ',', default_values_t = [100.0, 250.0, 500.0, 1000.0, 2000.0])]
        grid: Vec<f64>,
    },
    /// PEB versus transmit power.
    SweepPower {
        #[command(flatten)]
        common: Common,
        /// Powers in dBm.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 20.0])]
        grid: Vec<f64>,
    },
    /// Run the identity and oracle checks; exits non-zero if any fails.
    ValidateProps(Common),
    /// Render a sweep CSV as an SVG line plot.
    Plot {
        /// CSV written by one of the sweep commands.
        input: PathBuf,
        /// Columns to draw (default depends on the sweep).
        #[arg(long = "y", value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force a linear y axis.
        #[arg(long)]
        linear: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (TOML); the reference scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tune the combiner for minimum PEB instead of using matched states.
    #[arg(long)]
    reoptimize: bool,
    /// Drop all scatterers.
    #[arg(long)]
    single_path: bool,
    /// Tuner evaluations per point with --reoptimize.
    #[arg(long, default_value_t = 200)]
    budget: usize,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let s = match &self.config {
            Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Scenario::reference(),
        };
        Ok(if self.single_path { s.single_path() } else { s })
    }

    fn spec(&self, variable: SweepVariable, grid: Vec<f64>) -> SweepSpec {
        SweepSpec {
            reoptimize: self.reoptimize,
            single_path: self.single_path,
            seed: self.seed,
            budget: self.budget,
            ..SweepSpec::new(variable, grid)
        }
    }
}

/// Writes `text` to `dir/name`, or to stdout without a directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn sweep(common: &Common, variable: SweepVariable, grid: Vec<f64>, name: &str) -> Result<()> {
    let s = common.scenario()?;
    let table = experiments::run_sweep(&s, &common.spec(variable, grid))?;
    let failed = table.rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} points failed; see the status column", table.rows.len());
    }
    emit(common.out.as_deref(), name, &table.to_csv())
}

fn peb(common: &Common) -> Result<()> {
    let s = common.scenario()?;
    s.validate()?;
    let paths = PathSet::from_scenario(&s);
    let config: DmaConfiguration = if common.reoptimize {
        let settings = TunerSettings {
            budget: common.budget,
            seed: common.seed,
            ..TunerSettings::default()
        };
        tuner::optimize_peb(&s, &settings)?.config
    } else {
        tuner::matched_states(&s, &paths)
    };
    let bank = CombinerBank::build(&s, &config, Normalization::PerColumn)?;
    let m = Manifolds::build(&s, &paths, &bank);
    let report = FimBundle::compute(&s, &paths, &m)?.report()?;

    let mut meta = experiments::base_metadata(&s, common.seed);
    meta.push(format!("reoptimize={}", common.reoptimize));
    if common.reoptimize {
        meta.push(format!("tuner=random-search budget={} objective=peb", common.budget));
    }
    let mut text: String = meta.iter().map(|l| format!("# {l}\n")).collect();
    text += &report.to_csv();
    emit(common.out.as_deref(), "peb.csv", &text)?;
    if let Some(dir) = &common.out {
        let mut buf = Vec::new();
        config.write_csv(&s.hardware, &mut buf, &meta)?;
        emit(Some(dir), "configuration.csv", std::str::from_utf8(&buf)?)?;
        println!("PEB {:.6e} m (UE {:.6e} m)", report.peb, report.peb_ue);
    }
    Ok(())
}

fn validate(common: &Common) -> Result<bool> {
    let s = common.scenario()?;
    let options = ValidationOptions {
        seed: common.seed,
        ..ValidationOptions::default()
    };
    let report = experiments::validate_propositions(&s, &options);
    match &common.out {
        Some(dir) => {
            emit(Some(dir), "validation.txt", &report.to_text())?;
            emit(Some(dir), "validation.csv", &report.to_csv())?;
            print!("{}", report.to_text());
        }
        None => print!("{}", report.to_text()),
    }
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        if cfg!(not(feature = "parallel")) && n > 1 {
            eprintln!("warning: built without the parallel feature; --threads is ignored");
        }
        dmasense::par::set_threads(n).map_err(anyhow::Error::msg)?;
    }
    match cli.command {
        Command::Defaults { out } => {
            let s = Scenario::reference();
            let text = format!(
                "# Reference scenario (scenario_hash={}). Power keys also accept a _dbm variant.\n{}",
                s.hash(),
                s.to_toml_string()
            );
            emit(out.as_deref(), "scenario.toml", &text)?;
        }
        Command::Peb(common) => peb(&common)?,
        Command::SweepBandwidth { common, grid } => {
            let grid = match grid {
                Some(g) => g.iter().map(|mhz| mhz * 1e6).collect(),
                None => SweepSpec::default_bandwidth().grid,
            };
            sweep(&common, SweepVariable::Bandwidth, grid, "bandwidth.csv")?;
        }
        Command::SweepLeakage { common, grid } => {
            let grid = grid.unwrap_or_else(|| SweepSpec::default_leakage().grid);
            sweep(&common, SweepVariable::Leakage, grid, "leakage.csv")?;
        }
        Command::SweepTuning { common, grid } => {
            let grid = grid.iter().map(|mhz| mhz * 1e6).collect();
            sweep(&common, SweepVariable::TuningBandwidth, grid, "tuning.csv")?;
        }
        Command::SweepPower { common, grid } => {
            let grid = grid.iter().map(|&dbm| dbm_to_watts(dbm)).collect();
            sweep(&common, SweepVariable::Power, grid, "power.csv")?;
        }
        Command::ValidateProps(common) => return validate(&common),
        Command::Plot {
            input,
            columns,
            out,
            linear,
        } => {
            let path = plot::render(&input, &columns, out.as_deref(), !linear)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
