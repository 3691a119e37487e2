//! Command-line pipeline around `slicer-core`: configuration, subcommands
//! and artifact writers. The `slicer` binary is a thin wrapper.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use commands::Overrides;
pub use config::RunConfig;
pub use error::CliError;

use output::{sha256_hex, Artifacts};

pub const SUBCOMMANDS: [&str; 7] = ["profile", "scan", "match", "loss", "fieldimg", "compensate", "calibrate"];

/// Run one subcommand and write its manifest. Outputs already written stay
/// on disk when the command fails, and the manifest is still emitted for
/// optimizer-cap failures so the best-so-far report is traceable.
pub fn run(subcommand: &str, config_text: &str, args: &Overrides, out: &Path) -> Result<Vec<String>, CliError> {
    let start = Instant::now();
    let config = RunConfig::from_toml(config_text)?;
    let mut artifacts = Artifacts::new(out)?;
    let mut ctx = commands::Context { config: &config, args, out: &mut artifacts };
    let result = match subcommand {
        "profile" => commands::profile(&mut ctx),
        "scan" => commands::scan(&mut ctx),
        "match" => commands::matching(&mut ctx),
        "loss" => commands::loss(&mut ctx),
        "fieldimg" => commands::fieldimg(&mut ctx),
        "compensate" => commands::compensate_cmd(&mut ctx),
        "calibrate" => commands::calibrate(&mut ctx),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    };
    if let Err(e) = &result {
        if !matches!(e, CliError::OptimizerCap(_)) {
            return Err(result.unwrap_err());
        }
    }
    let files = artifacts.files().to_vec();
    let hash = sha256_hex(&[subcommand.as_bytes(), config_text.as_bytes(), format!("{args:?}").as_bytes()]);
    artifacts.finish(subcommand, &hash, start.elapsed().as_secs_f64())?;
    result.map(|_| files)
}
