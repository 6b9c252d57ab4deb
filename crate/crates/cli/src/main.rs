//! `afnet`: train, enhance, analyse and reproduce the ablation ladder.

mod analyze;
mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use afnet::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "afnet",
    version,
    about = "Low-light enhancement with a Fourier-spectrum adversarial objective",
    after_help = "train, ablate and analyze gmacs accept every configuration key as --key value.\nAFNET_SEED overrides the seed from the config file; an explicit --seed wins."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run configuration: a `key = value` file plus `--key value` overrides.
#[derive(Args, Clone, Debug)]
pub struct ConfigArgs {
    /// Configuration file; omitted keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Configuration keys given as `--key value` or `--key=value`, anywhere on
    /// the line. Filled from argv before clap sees it.
    #[arg(skip)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a paired dataset; writes best.ckpt, last.ckpt, log.csv and resolved.cfg.
    Train {
        /// Dataset root holding low/ and high/ (or train/ and val/ splits of them).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Enhance one image or every image in a folder.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        /// PNG file or folder; RAW mosaics need a `.txt` sidecar.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Expected input mode; must agree with the checkpoint.
        #[arg(long, value_parser = ["srgb3", "raw4"])]
        mode: Option<String>,
    },
    /// Image metrics, spectra and cost accounting.
    #[command(subcommand)]
    Analyze(analyze::Analyze),
    /// Train the nine ablation rows and tabulate PSNR, SSIM and GMACs.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Square input resolution for the GMAC column.
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Exit status for a library error: 1 for usage and configuration, 2 for
/// data and files, 3 for numerical failures.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) => 1,
        Error::Data(_) | Error::Format(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
        Error::Numeric(_) => 3,
    }
}

fn main() -> ExitCode {
    let (argv, overrides) = io::split_overrides(std::env::args_os());
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train { data, out, mut cfg } => {
            cfg.overrides = overrides;
            run::train(&cfg, &data, &out)
        }
        Command::Ablate {
            data,
            out,
            res,
            mut cfg,
        } => {
            cfg.overrides = overrides;
            run::ablate(&cfg, &data, &out, res)
        }
        Command::Analyze(a) => analyze::run(a, overrides),
        _ if !overrides.is_empty() => Err(Error::Config(format!("{} takes no configuration keys", overrides[0]))),
        Command::Enhance {
            checkpoint,
            input,
            out,
            mode,
        } => run::enhance(&checkpoint, &input, &out, mode.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
