use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use covdetect::experiment::{
    run_experiment, write_summary_csv, Detector, ExperimentConfig, Overrides, RunOptions,
};
use covdetect::siggen::{write_matrix_csv, Scenario};

#[derive(Parser)]
#[command(name = "covdetect", version, about = "Activity and delay detection Monte Carlo runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an antenna sweep and write the MDP/FAP table as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of cd_e, bcd, cd_e_sync.
        #[arg(long, value_delimiter = ',')]
        detectors: Option<Vec<Detector>>,
        #[arg(long, value_delimiter = ',')]
        antennas: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        per_trial_dump: Option<PathBuf>,
        /// Fill mean_runtime_ms with wall-clock times (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print a template experiment file.
    Init {
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
    },
    /// Generate one scenario and write Y and the sample covariance as matrix text files.
    Dump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        antennas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            detectors,
            antennas,
            trials,
            seed,
            out,
            per_trial_dump,
            timing,
        } => {
            let mut exp = ExperimentConfig::load(&config)?;
            exp.apply(&Overrides { detectors, antennas, trials, seed });
            let rows = run_experiment(&exp, &RunOptions { timing, per_trial_dump })?;
            match out {
                Some(path) => {
                    let file = File::create(&path).with_context(|| path.display().to_string())?;
                    write_summary_csv(BufWriter::new(file), &rows)?;
                }
                None => write_summary_csv(io::stdout().lock(), &rows)?,
            }
        }
        Command::Init { scale } => {
            let exp = match scale {
                Scale::Desk => ExperimentConfig::desk_scale(),
                Scale::Paper => ExperimentConfig::paper_scale(),
            };
            io::stdout().write_all(exp.to_toml_string().as_bytes())?;
        }
        Command::Dump { config, antennas, seed, out_dir } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(m) = antennas {
                exp.system.num_antennas = m;
            }
            if let Some(s) = seed {
                exp.system.rng_seed = s;
            }
            let system = exp.system.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(system.rng_seed);
            let scenario = Scenario::generate(&system, &mut rng)?;
            std::fs::create_dir_all(&out_dir)?;
            for (name, m) in [("y.csv", &scenario.signal.y), ("sample_cov.csv", scenario.sample.matrix())] {
                let path = out_dir.join(name);
                write_matrix_csv(BufWriter::new(File::create(&path)?), m)?;
            }
        }
    }
    Ok(())
}
