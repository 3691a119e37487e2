use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slicer_cli::{run, CliError, Overrides};

#[derive(Parser)]
#[command(name = "slicer", version, about = "Single-layer microwave preparation: simulation, fits and spectral imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; presets are used for anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plot: bool,
    /// Seed for the optional image noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Transfer profiles of one transition for several pulse durations.
    Profile {
        #[arg(long)]
        transition: Option<String>,
        /// Comma-separated durations in ms.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        durations: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Layer scan of the preparation sequence (up, down or both).
    Scan {
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Layer matching with the transition 3 pulse.
    Match {
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize or read a decay curve and fit two/three-body loss.
    Loss {
        #[arg(long, conflicts_with_all = ["input", "synthesize"])]
        preset: Option<String>,
        #[arg(long, conflicts_with = "synthesize")]
        input: Option<String>,
        /// `alpha=A,beta=B` in 1/s.
        #[arg(long)]
        synthesize: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Spectral image of the transverse field.
    Fieldimg {
        /// `x,y` in G.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        shim: Option<Vec<f64>>,
        /// Also emit an image series over shim values.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Find shim fields that flatten the spectral images.
    Compensate {
        #[command(flatten)]
        common: Common,
    },
    /// Print derived constants and check them against the references.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_synthesis(s: &str) -> Result<(f64, f64), CliError> {
    let (mut a, mut b) = (None, None);
    for part in s.split([',', ' ']).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| CliError::Usage(format!("bad --synthesize item '{part}'")))?;
        let v: f64 = v.parse().map_err(|_| CliError::Usage(format!("bad number in '{part}'")))?;
        match k {
            "alpha" => a = Some(v),
            "beta" => b = Some(v),
            _ => return Err(CliError::Usage(format!("unknown --synthesize key '{k}'"))),
        }
    }
    match (a, b) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(CliError::Usage("--synthesize needs alpha=..,beta=..".into())),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut o = Overrides::default();
    let (name, common) = match cli.command {
        Command::Profile { transition, durations, common } => {
            o.transition = transition;
            o.durations = durations;
            ("profile", common)
        }
        Command::Scan { mode, common } => {
            o.mode = mode;
            ("scan", common)
        }
        Command::Match { common } => ("match", common),
        Command::Loss { preset, input, synthesize, common } => {
            o.preset = preset;
            o.input = input;
            o.synthesize = synthesize.as_deref().map(parse_synthesis).transpose()?;
            ("loss", common)
        }
        Command::Fieldimg { shim, sweep, common } => {
            o.shim = shim.map(|s| [s[0], s[1]]);
            o.sweep = sweep;
            ("fieldimg", common)
        }
        Command::Compensate { common } => ("compensate", common),
        Command::Calibrate { common } => ("calibrate", common),
    };
    o.plot = common.plot;
    o.seed = common.seed;
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let files = run(name, &text, &o, &common.out)?;
    for f in files {
        eprintln!("wrote {}", common.out.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
