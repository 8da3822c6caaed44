use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rffid::analysis::{render_xi_table, xi_table};
use rffid::experiment::{self, gen_dataset, run_experiment, write_results, ExperimentConfig, SchemeKind};
use rffid::features::FeatureMethod;

/// Multi-antenna radio fingerprint identification experiments.
#[derive(Parser)]
#[command(name = "rffid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate capture files and a manifest.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Run the accuracy sweep and write a results CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated scheme list, overriding the config.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        #[arg(long, value_parser = ["itd", "lms"])]
        feature: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the accuracy bound table for a confidence level and SNR.
    Analyze {
        #[arg(long)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        /// Comma-separated antenna counts, ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Plot mean of one results column against another as SVG.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        series: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { config, out, seed } => {
            let mut cfg = load(&config)?;
            cfg.seed = seed;
            let manifest = gen_dataset(&cfg, &out)?;
            eprintln!(
                "wrote {} files, {} frame records to {}",
                manifest.files.len(),
                manifest.frame_records(),
                out.display()
            );
        }
        Command::Run {
            config,
            out,
            scheme,
            feature,
            trials,
            seed,
            threads,
        } => {
            let mut cfg = load(&config)?;
            if !scheme.is_empty() {
                cfg.schemes = scheme.iter().map(|s| SchemeKind::parse(s)).collect::<rffid::Result<_>>()?;
            }
            if let Some(f) = feature {
                cfg.feature = f.parse::<FeatureMethod>()?;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let start = Instant::now();
            let records = run_experiment(&cfg)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_results(BufWriter::new(f), &records).with_context(|| format!("writing {}", out.display()))?;
            for (scheme, snr, acc) in experiment::mean_accuracy(&records) {
                eprintln!("{scheme:>6} snr={snr:>5} mean accuracy {acc:.4}");
            }
            eprintln!("{} records in {:.1} s", records.len(), start.elapsed().as_secs_f64());
        }
        Command::Analyze { alpha, snr, n } => {
            if n.windows(2).any(|w| w[0] >= w[1]) {
                bail!("--n must be strictly ascending");
            }
            let rows = xi_table(alpha, snr, &n)?;
            print!("{}", render_xi_table(alpha, snr, &rows));
        }
        Command::Plot {
            results,
            x,
            y,
            series,
            out,
        } => {
            experiment::plot(&results, &x, &y, &series, &out)?;
        }
    }
    Ok(())
}
