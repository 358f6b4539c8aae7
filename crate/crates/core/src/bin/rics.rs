use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rics_core::aioa::{default_init, run_aioa, AioaOptions};
use rics_core::channel::draw_channels;
use rics_core::harness::{run_experiment, validate_outage, write_outputs, ExperimentOptions, Preset, Scheme};
use rics_core::scenario::{generate_scenario, load_config, Config, SeedSpec};
use rics_core::Result;

#[derive(Parser)]
#[command(name = "rics", version, about = "RICS-assisted vehicular offloading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a preset or the configured sweep over seeds and writes CSV output.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "custom")]
        preset: String,
        /// Number of seeds, starting at 0. Overrides the config.
        #[arg(long)]
        seeds: Option<usize>,
        /// Use 100 seeds.
        #[arg(long, conflicts_with = "seeds")]
        full: bool,
        /// Monte-Carlo trials for the outage column.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Comma-separated schemes for the custom preset.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<String>,
        /// Give the offloading benchmarks the optimized sharing and RICS state.
        #[arg(long)]
        fair_rics: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solves one scenario and writes the report as JSON.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also print the per-pair outage validation table.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes every channel entry of one realization as CSV.
    DumpChannels {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => load_config(p),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config: path, preset, seeds, full, trials, schemes, fair_rics, out } => {
            let mut cfg = config(path.as_ref())?;
            if let Some(k) = seeds {
                cfg.seeds = SeedSpec::Range { start: 0, count: k };
            }
            if full {
                cfg.seeds = SeedSpec::Range { start: 0, count: 100 };
            }
            let preset: Preset = preset.parse()?;
            let schemes = schemes.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>>>()?;
            let opts = ExperimentOptions { outage_trials: trials, fair_rics, ..ExperimentOptions::from_config(&cfg) };
            // fail on an unwritable directory before spending any compute
            std::fs::create_dir_all(&out)?;
            let result = run_experiment(preset, &cfg, &schemes, &opts)?;
            write_outputs(&result, &out)?;
            log::info!("{} rows, {} failed runs, written to {}", result.rows.len(), result.failures.len(), out.display());
            for f in &result.failures {
                log::warn!("seed {} {}: {}", f.seed, f.scheme, f.error);
            }
        }
        Command::Solve { config: path, seed, trials, out } => {
            let cfg = config(path.as_ref())?;
            let sc = generate_scenario(&cfg.system, &cfg.placement, seed);
            let ch = draw_channels(&sc, seed)?;
            let rep = run_aioa(&sc, &ch, &default_init(&sc, &ch)?, &AioaOptions::for_scenario(&sc))?;
            let json = rep.to_json()?;
            match out {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
            if trials > 0 {
                eprintln!("pair  empirical  ci_low     ci_high    margin       pass");
                for r in validate_outage(&rep, &sc, &ch, trials)? {
                    eprintln!(
                        "{:<5} {:<10.5} {:<10.5} {:<10.5} {:<12.4e} {}",
                        r.pair, r.empirical, r.ci_low, r.ci_high, r.surrogate_margin, r.pass
                    );
                }
            }
        }
        Command::DumpChannels { config: path, seed, out } => {
            let cfg = config(path.as_ref())?;
            let sc = generate_scenario(&cfg.system, &cfg.placement, seed);
            draw_channels(&sc, seed)?.write_csv(BufWriter::new(File::create(out)?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
