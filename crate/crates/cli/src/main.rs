use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod svg;

use config::{CampaignConfig, PulseRunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "substrate-bg",
    version,
    about = "Radiation backgrounds in thermal kinetic-inductance detector substrates"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate inputs and exit without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_primaries: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Transport campaigns for every configured source and thickness.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Island rate and power against substrate thickness.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Floor activities from a NaI spectrum and per-segment templates.
    FitActivities {
        #[arg(long)]
        measured: PathBuf,
        /// Directory holding K40.csv, U-pre.csv, U-post.csv, Th-a.csv, Th-b.csv.
        #[arg(long)]
        templates: PathBuf,
        /// Fixed cosmic contribution added to the model.
        #[arg(long)]
        cosmic: Option<PathBuf>,
        #[arg(long, default_value_t = 300.0)]
        window_min: f64,
        #[arg(long, default_value_t = 2750.0)]
        window_max: f64,
        #[arg(long)]
        float_u_pre: bool,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Electromagnetic and hadronic+muon flux scales from a high-energy NaI spectrum.
    FitCosmic {
        #[arg(long)]
        measured: PathBuf,
        #[arg(long)]
        em: PathBuf,
        #[arg(long)]
        hadronic_muon: PathBuf,
        #[arg(long, default_value_t = 3000.0)]
        window_min: f64,
        #[arg(long, default_value_t = 100_000.0)]
        window_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize, trigger, filter and calibrate a TKID pulse stream.
    Pulses {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Bin-wise model/measurement comparison.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        measured: PathBuf,
        /// Model including the frame-hit term.
        #[arg(long)]
        model_frame: Option<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn load_campaign(path: &std::path::Path, o: Overrides) -> Result<CampaignConfig, CliError> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(n) = o.n_primaries {
        if n == 0 {
            return Err(CliError::Config("--n-primaries must be at least 1".into()));
        }
        cfg.n_primaries = n;
    }
    if let Some(d) = o.output_dir {
        cfg.output_dir = d;
    }
    Ok(cfg)
}

fn emit(text: String, out: Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => {
            std::fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_files(paths: &[&PathBuf]) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Config(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let dry = cli.dry_run;
    match cli.command {
        Command::Simulate { config, overrides } | Command::Sweep { config, overrides } if dry => {
            let cfg = load_campaign(&config, overrides)?;
            commands::check_inputs()?;
            eprintln!(
                "{}: ok ({} thicknesses, {} primaries)",
                config.display(),
                cfg.thicknesses_um.len(),
                cfg.n_primaries
            );
            Ok(())
        }
        Command::Simulate { config, overrides } => {
            commands::simulate(&load_campaign(&config, overrides)?, cli.threads)
        }
        Command::Sweep { config, overrides } => {
            commands::sweep(&load_campaign(&config, overrides)?, cli.threads)
        }
        Command::FitActivities {
            measured,
            templates,
            cosmic,
            window_min,
            window_max,
            float_u_pre,
            seed,
            out,
        } => {
            check_files(&[&measured, &templates])?;
            if let Some(c) = &cosmic {
                check_files(&[c])?;
            }
            if dry {
                return Ok(());
            }
            let args = commands::FitActivitiesArgs {
                measured,
                templates,
                cosmic,
                window_kev: (window_min, window_max),
                float_u_pre,
                seed,
            };
            emit(commands::fit_activities_cmd(&args)?, out)
        }
        Command::FitCosmic {
            measured,
            em,
            hadronic_muon,
            window_min,
            window_max,
            out,
        } => {
            check_files(&[&measured, &em, &hadronic_muon])?;
            if dry {
                return Ok(());
            }
            emit(
                commands::fit_cosmic_cmd(&measured, &em, &hadronic_muon, (window_min, window_max))?,
                out,
            )
        }
        Command::Pulses {
            config,
            seed,
            output_dir,
        } => {
            let mut cfg = PulseRunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if dry {
                return Ok(());
            }
            commands::pulses(&cfg)
        }
        Command::Report {
            model,
            measured,
            model_frame,
            output_dir,
        } => {
            check_files(&[&model, &measured])?;
            if let Some(f) = &model_frame {
                check_files(&[f])?;
            }
            if dry {
                return Ok(());
            }
            commands::report(&commands::ReportArgs {
                model,
                measured,
                model_frame,
                output_dir,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("substrate-bg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
