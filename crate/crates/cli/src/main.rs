use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msrds::{execute, load_config, CliError, Command, Format};

#[derive(Parser)]
#[command(
    name = "msrds",
    version,
    about = "Mean-square dichotomy spectra, particle simulation and pitchfork attractor runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectrum estimates of the linear model or the pitchfork linearisation
    Spectrum(Flags),
    /// Particle simulation checked against the moment equations
    Simulate(Flags),
    /// Pullback runs of the pitchfork moment system
    Pullback(Flags),
    /// Bifurcation sweep of the pitchfork model over alpha
    Bifurcate(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides output.directory (default ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated output formats, overrides output.formats
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<FormatArg>>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Do not echo the resolved config or list written files
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
}

fn run(cmd: Command, flags: Flags) -> Result<(), CliError> {
    let mut cfg = load_config(&flags.config)?;
    if let Some(out) = flags.out {
        cfg.output.directory = out.to_string_lossy().into_owned();
    }
    if let Some(formats) = flags.format {
        let mut f: Vec<Format> = formats
            .into_iter()
            .map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Svg => Format::Svg,
            })
            .collect();
        f.sort();
        f.dedup();
        cfg.output.formats = f;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if !flags.quiet {
        eprintln!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
    }
    let written = execute(cmd, &cfg)?;
    if !flags.quiet {
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (cmd, flags) = match cli.command {
        Cmd::Spectrum(f) => (Command::Spectrum, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Pullback(f) => (Command::Pullback, f),
        Cmd::Bifurcate(f) => (Command::Bifurcate, f),
    };
    match run(cmd, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msrds: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
