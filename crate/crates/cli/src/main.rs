use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use svcvv::svc::ModelKind;
use svcvv_cli::{RunConfig, DEFAULT_DT, DEFAULT_DUPLICATES, EXIT_VALIDATION};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "svcvv",
    version,
    about = "Visual vertical and motion sickness incidence from IMU and camera recordings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the visual vertical of every frame.
    Vv {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the model on a trial and write the MSI trace.
    Msi {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "svc_vv")]
        model: String,
        /// key = value parameter overrides.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_DUPLICATES)]
        dup: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Regression and MAD of the visual vertical on a static pose suite.
    StaticEval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic trial bundle.
    Synth {
        /// key = value spec; defaults to a grid slalom.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn run(cmd: Command) -> svcvv::Result<()> {
    match cmd {
        Command::Vv { manifest, out } => {
            let est = svcvv_cli::cmd_vv(&manifest, &out)?;
            println!("{} frames -> {}", est.len(), out.join("vv.csv").display());
        }
        Command::Msi {
            manifest,
            model,
            params,
            dt,
            dup,
            out,
        } => {
            let model: ModelKind = model.parse()?;
            let cfg = RunConfig {
                params_file: params,
                dt,
                duplicate_n: dup,
                out,
                ..RunConfig::new(manifest, model)
            };
            print_json(&svcvv_cli::cmd_msi(&cfg)?);
        }
        Command::StaticEval { manifest, out } => {
            print_json(&svcvv_cli::cmd_static_eval(&manifest, &out)?);
        }
        Command::Synth { spec, seed, out } => {
            print_json(&svcvv_cli::cmd_synth(spec.as_deref(), &out, seed)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(svcvv_cli::exit_code(&e) as u8)
        }
    }
}
