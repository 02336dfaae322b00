use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use greenfit::commands::{self, GenerateSpec, TrainSpec};
use greenfit::config::{ConfigFile, EvalOpts, GenerateOpts, RateOpts, TrainOpts};
use greenfit::presets::{self, Overrides};

/// Exit code for a finished run that hit a projection breakdown or missed
/// a target band.
const EXIT_INCOMPLETE: u8 = 2;

#[derive(Parser)]
#[command(name = "greenfit", version, about = "Learn Green's function kernels with orthogonal greedy fits")]
struct Cli {
    /// Worker thread cap for scoring and per-sensor fitting.
    #[arg(long, global = true, env = "GREENFIT_THREADS")]
    threads: Option<usize>,
    /// TOML file with [generate], [train], [eval] or [rate] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overwrite existing output directories.
    #[arg(long, global = true)]
    force: bool,
    /// Suppress live progress rows.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample forcings and compute responses into a dataset directory.
    Generate(GenerateOpts),
    /// Fit a kernel (oga) or per-sensor slices (pwoga) to a dataset.
    Train(TrainOpts),
    /// Report test errors of a trained model.
    Eval(EvalOpts),
    /// Fit convergence rates to a trace.
    Rate(RateOpts),
    /// Run a full preset pipeline and check its target bands.
    Repro {
        /// One of the preset names; see --help.
        preset: String,
        #[arg(long, default_value = "repro")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        dict: Option<usize>,
        #[arg(long)]
        sensors: Option<String>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let verbose = !cli.quiet;
    match cli.command {
        Command::Generate(mut o) => {
            if let Some(f) = file.generate.take() {
                o.fill(f);
            }
            let g = commands::generate(&GenerateSpec::from_opts(&o)?, cli.force)?;
            println!("dataset={}", g.dir.display());
            println!("pairs={}", g.data.len());
            println!("hash={}", g.hash);
            Ok(true)
        }
        Command::Train(mut o) => {
            if let Some(f) = file.train.take() {
                o.fill(f);
            }
            let spec = TrainSpec::from_opts(&o)?;
            let t = commands::train(&spec, cli.force, verbose)?;
            println!("run={}", spec.out.display());
            println!("termination={}", t.termination);
            if let Some(r) = t.final_record() {
                println!("{}", commands::progress_line(r));
            }
            if t.broke_down() {
                eprintln!("projection breakdown; the last good model was saved");
            }
            Ok(!t.broke_down())
        }
        Command::Eval(mut o) => {
            if let Some(f) = file.eval.take() {
                o.fill(f);
            }
            let r = commands::eval(&o)?;
            println!("model_kind={}", r.kind);
            println!("pairs={}", r.pairs);
            println!("eps_u={:.6e}", r.eps_u);
            if let Some(g) = r.eps_g {
                println!("eps_G={g:.6e}");
            }
            Ok(true)
        }
        Command::Rate(mut o) => {
            if let Some(f) = file.rate.take() {
                o.fill(f);
            }
            for (col, fit) in commands::rate(&o)? {
                println!(
                    "{}: slope={:.4} intercept={:.4} window={}..{} r2={:.4} points={}",
                    col.name(),
                    fit.slope,
                    fit.intercept,
                    fit.window.0,
                    fit.window.1,
                    fit.r_squared,
                    fit.points
                );
            }
            Ok(true)
        }
        Command::Repro {
            preset,
            out,
            seed,
            nmax,
            dict,
            sensors,
        } => {
            let o = Overrides {
                seed,
                nmax,
                dict,
                sensors,
            };
            let r = presets::repro(&preset, &out, &o, cli.force, verbose)?;
            print!("{}", std::fs::read_to_string(&r.summary)?);
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INCOMPLETE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
