use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Parser, Subcommand, ValueEnum};

use tpxspec::synth::Preset;

mod commands;
mod config;
mod error;
mod output;
mod svg;

use commands::{analyze, calibrate, coincide, generate, report, selftest};
use config::Resolved;
use error::CliResult;
use output::{OutputDir, Provenance};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Phx1,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "tpxspec",
    version,
    about = "Synthetic and measured photon-pair spectroscopy on Timepix event data"
)]
#[command(after_long_help = default_config_help())]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set coinc.window_ns=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Hit file format written by `generate`.
    #[arg(long, global = true)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a hit stream with ground truth.
    Generate {
        #[arg(long)]
        preset: Option<Preset>,
        /// Acquisition time in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Fit the wavelength scale of both channels from an argon run.
    Calibrate {
        #[arg(long)]
        hits: Option<PathBuf>,
    },
    /// Match the channels and fit the arrival-time difference.
    Coincide {
        #[arg(long)]
        hits: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Full spectral analysis of a pair run.
    Analyze {
        #[arg(long)]
        hits: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Argon calibration followed by every pump-power setting.
    Report {
        /// Repeatable; defaults to all pair-source presets.
        #[arg(long)]
        preset: Vec<Preset>,
    },
    /// Run the acceptance criteria.
    Selftest {
        /// Criterion ids; all when omitted.
        ids: Vec<u8>,
    },
}

fn default_config_help() -> &'static str {
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(|| {
        let body = toml::to_string(&config::RunConfig::default()).unwrap_or_default();
        format!("Default configuration:\n\n{body}")
    })
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn path_override(key: &str, p: &std::path::Path) -> String {
    format!("{key}={}", toml_string(&p.display().to_string()))
}

impl Cli {
    /// Flags are applied after `--set`, so they win.
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(seed) = self.seed {
            o.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            o.push(path_override("out", out));
        }
        if let Some(f) = self.format {
            let name = match f {
                FormatArg::Phx1 => "phx1",
                FormatArg::Csv => "csv",
            };
            o.push(format!("format={}", toml_string(name)));
        }
        match &self.command {
            Command::Generate { preset, duration } => {
                if let Some(p) = preset {
                    o.push(format!("synth.preset={}", toml_string(p.name())));
                }
                if let Some(d) = duration {
                    o.push(format!("synth.duration_s={d:?}"));
                }
            }
            Command::Calibrate { hits } => {
                if let Some(h) = hits {
                    o.push(path_override("io.hits", h));
                }
            }
            Command::Coincide { hits, calibration } | Command::Analyze { hits, calibration } => {
                if let Some(h) = hits {
                    o.push(path_override("io.hits", h));
                }
                if let Some(c) = calibration {
                    o.push(path_override("io.calibration", c));
                }
            }
            Command::Report { .. } | Command::Selftest { .. } => {}
        }
        o
    }

    fn name(&self) -> &'static str {
        match self.command {
            Command::Generate { .. } => "generate",
            Command::Calibrate { .. } => "calibrate",
            Command::Coincide { .. } => "coincide",
            Command::Analyze { .. } => "analyze",
            Command::Report { .. } => "report",
            Command::Selftest { .. } => "selftest",
        }
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

fn execute(cli: &Cli, resolved: &Resolved) -> CliResult<()> {
    let config = &resolved.config;
    let provenance = Provenance::new(cli.name(), resolved);
    if let Command::Report { preset } = &cli.command {
        let presets = if preset.is_empty() {
            Preset::PAIR_SOURCES.to_vec()
        } else {
            preset.clone()
        };
        let r = report::run(config, &presets, &provenance)?;
        for (ch, s) in &r.calibration {
            println!(
                "{ch}: {:.5} nm/pix, intercept {:.3} nm",
                s.slope_nm_per_pix, s.intercept_nm
            );
        }
        println!(
            "{:>6} {:>20} {:>20} {:>20} {:>8}",
            "mW", "signal med/FWHM", "idler med/FWHM", "pump central/rms", "σ ns"
        );
        for row in &r.settings {
            let m = &row.measured;
            let p = &row.published;
            println!(
                "{:>6} {:>9}/{:<10} {:>9}/{:<10} {:>10}/{:<9} {:>8}",
                row.power_mw,
                opt(m.signal.median_nm, 2),
                opt(m.signal.fwhm_nm, 2),
                opt(m.idler.median_nm, 2),
                opt(m.idler.fwhm_nm, 2),
                opt(m.pump.central_nm, 3),
                opt(m.pump.rms_nm, 3),
                opt(m.coincidence.resolution_sigma_ns, 2),
            );
            println!(
                "{:>6} {:>9.2}/{:<10.2} {:>9.2}/{:<10.2} {:>10.3}/{:<9.3} (published)",
                "",
                p.signal_median_nm,
                p.signal_fwhm_nm,
                p.idler_median_nm,
                p.idler_fwhm_nm,
                p.pump_central_nm,
                p.pump_rms_nm
            );
        }
        println!(
            "pump central increasing with power: {}",
            r.pump_central_increasing
        );
        return Ok(());
    }

    let mut out = OutputDir::create(&config.out, provenance)?;
    match &cli.command {
        Command::Generate { .. } => {
            let s = generate::run(config, &mut out)?;
            println!(
                "{}: {} hits ({} dark), {} photons emitted, {} detected, {} s",
                s.hit_file, s.hits, s.dark_hits, s.photons, s.detected, s.duration_s
            );
        }
        Command::Calibrate { .. } => {
            let cal = calibrate::run(config, &config.hits_path(), &mut out)?;
            for (ch, e) in &cal.channels {
                let c = &e.calibration;
                println!(
                    "{ch}: λ = {:.5} · x + {:.3} nm, residual rms {:.4} nm",
                    c.slope, c.intercept, c.residual_rms
                );
            }
        }
        Command::Coincide { .. } => {
            let s = coincide::run(
                config,
                &config.hits_path(),
                &config.calibration_path(),
                &mut out,
            )?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            let sigma = s
                .resolution_fit
                .as_ref()
                .filter(|f| f.converged)
                .map(|f| f.sigma.abs());
            println!(
                "{} signal, {} idler, {} matched, {} within ±{} ns, σ = {} ns",
                s.n_signal,
                s.n_idler,
                s.n_matched,
                s.n_coincidences,
                s.window_ns,
                opt(sigma, 3)
            );
        }
        Command::Analyze { .. } => {
            let (_, s) = analyze::run(
                config,
                &config.hits_path(),
                &config.calibration_path(),
                &mut out,
            )?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} coincidences, σ = {} ns",
                s.coincidence.n_coincidences,
                opt(s.coincidence.resolution_sigma_ns, 3)
            );
            println!(
                "signal: median {} nm, FWHM {} nm",
                opt(s.signal.median_nm, 2),
                opt(s.signal.fwhm_nm, 2)
            );
            println!(
                "idler: median {} nm, FWHM {} nm",
                opt(s.idler.median_nm, 2),
                opt(s.idler.fwhm_nm, 2)
            );
            println!(
                "pump: central {} nm, rms {} nm",
                opt(s.pump.central_nm, 3),
                opt(s.pump.rms_nm, 3)
            );
            println!("JSI correlation: {}", opt(s.jsi_correlation, 3));
        }
        Command::Selftest { ids } => {
            let result = selftest::run(config.seed, ids, &mut out);
            out.finish()?;
            result?;
            return Ok(());
        }
        Command::Report { .. } => unreachable!(),
    }
    out.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result =
        config::load(cli.config.as_deref(), &cli.overrides()).and_then(|r| execute(&cli, &r));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
