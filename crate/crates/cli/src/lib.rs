//! Command-line driver: strict JSON configs in, CSV / SVG tables out.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

pub use commands::{run_command, Command};
pub use config::{load_config, parse_config, Format, RunConfig};
pub use error::CliError;
pub use table::{Cell, PlotSpec, ResultTable};

/// Writes `table` as `<dir>/<name>.<ext>`.
pub fn emit(table: &ResultTable, format: Format, dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.{}", table.name, format.extension()));
    let body = match format {
        Format::Csv => table.to_csv(),
        Format::Svg => table.to_svg(),
    };
    fs::write(&path, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Runs one subcommand end to end and returns the written files. The
/// resolved config is written next to the tables as `<command>.config.json`.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let table = run_command(cmd, cfg)?;
    let dir = Path::new(&cfg.output.directory);
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for &format in &cfg.output.formats {
        written.push(emit(&table, format, dir)?);
    }
    let echo = dir.join(format!("{}.config.json", cmd.as_str()));
    let pretty = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(&echo, pretty + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", echo.display())))?;
    written.push(echo);
    Ok(written)
}
