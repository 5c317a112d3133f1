use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ncnes_cli::{parse_config, run_experiment, Algo, Overrides};
use ncnes_core::parallel::Mode;

/// Run seeded NCNES or NCS-C experiments and write CSV curves.
#[derive(Parser, Debug)]
#[command(name = "ncnes", version)]
struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; repeat for several. Replaces the seeds in the file.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_parser = parse_with::<Mode>)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_with::<Algo>)]
    algo: Option<Algo>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diversity trade-off weight.
    #[arg(long)]
    phi: Option<f64>,
    /// No progress output.
    #[arg(long)]
    quiet: bool,
}

fn parse_with<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = parse_config(&args.config).and_then(|mut cfg| {
        cfg.apply(Overrides { seeds: args.seeds, mode: args.mode, algo: args.algo, out_dir: args.out, phi: args.phi })?;
        run_experiment(&cfg, args.quiet)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
