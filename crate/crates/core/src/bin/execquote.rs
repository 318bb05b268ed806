use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use execquote::config::ExperimentConfig;
use execquote::experiments;
use execquote::Error;

/// Exit code for a verification run whose checks failed.
const EXIT_VERIFY_FAIL: u8 = 3;

#[derive(Parser)]
#[command(name = "execquote", version, about = "Optimal liquidation quotes with price signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for the Monte Carlo runs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Quote curves: quotes.csv
    Quote(Common),
    /// Quote heatmap over (t, q): surface.csv
    Surface(Common),
    /// Monte Carlo check of the closed-form value: verify.csv, verify_report.txt
    Verify {
        #[command(flatten)]
        common: Common,
        /// Overrides mc.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides mc.n_paths.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Long-horizon growth rates: growth.csv
    Asymptotics(Common),
    /// Figure families with the reference calibration, plus manifest.csv
    Reproduce {
        /// Family name, or `all`.
        figure: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Time points per curve.
        #[arg(long)]
        t_points: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Quote(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let path = with_threads(c.threads, || experiments::cmd_quote(&cfg, &c.out))??;
            println!("{}", path.display());
        }
        Command::Surface(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            for path in with_threads(c.threads, || experiments::cmd_surface(&cfg, &c.out))?? {
                println!("{}", path.display());
            }
        }
        Command::Verify { common, seed, paths } => {
            let mut cfg = ExperimentConfig::load(&common.config)?;
            if let Some(seed) = seed {
                cfg.mc.seed = seed;
            }
            if let Some(n) = paths {
                cfg.mc.n_paths = n;
            }
            cfg.validate()?;
            let (report, files) = with_threads(common.threads, || experiments::cmd_verify(&cfg, &common.out))??;
            print!("{}", experiments::render_verification_report(&report));
            for path in files {
                println!("{}", path.display());
            }
            if !report.passed() {
                return Ok(EXIT_VERIFY_FAIL);
            }
        }
        Command::Asymptotics(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let path = with_threads(c.threads, || experiments::cmd_asymptotics(&cfg, &c.out))??;
            println!("{}", path.display());
        }
        Command::Reproduce { figure, out, t_points, threads } => {
            for path in with_threads(threads, || experiments::cmd_reproduce(&figure, &out, t_points))?? {
                println!("{}", path.display());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
