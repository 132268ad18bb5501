use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrc_mcf::commands::{self, default_k_list, LambdaSetting, PartialSettings, RunSettings};
use lrc_mcf::data::BlobSpec;
use lrc_mcf::Error;

/// Multi-view clustering with locality-constrained view graphs and a
/// rank-constrained consensus graph.
///
/// Exit codes: 0 success, 2 bad command line, 3 invalid configuration,
/// 4 invalid or malformed input data, 5 numerical failure, 6 file system
/// error.
#[derive(Parser)]
#[command(name = "lrc-mcf", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset described by a JSON manifest.
    Cluster {
        manifest: PathBuf,
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Repeat `cluster` over a list of neighbour counts.
    SweepK {
        manifest: PathBuf,
        /// Comma-separated neighbour counts [default: 10,20,...,130].
        #[arg(long, value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Generate a synthetic multi-view blob dataset.
    Synth {
        #[arg(long, default_value_t = 100)]
        n_per_cluster: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 3)]
        views: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Also write metrics.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral clustering on concatenated features.
    Baseline {
        manifest: PathBuf,
        #[command(flatten)]
        opts: ModelOpts,
    },
}

#[derive(Args)]
struct ModelOpts {
    /// JSON file with default settings; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Neighbours per sample in each view graph.
    #[arg(long)]
    k: Option<usize>,
    /// Number of clusters (default: distinct labels in the dataset).
    #[arg(long)]
    clusters: Option<usize>,
    /// View-graph regulariser: auto, auto-per-row or a positive number.
    #[arg(long)]
    lambda: Option<LambdaSetting>,
    /// View-weight exponent, greater than 1.
    #[arg(long)]
    r: Option<f64>,
    /// Initial weight of the rank penalty.
    #[arg(long)]
    beta: Option<f64>,
    /// Keep beta fixed.
    #[arg(long)]
    no_beta_adapt: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective change treated as converged.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Standardise each feature column before computing distances.
    #[arg(long, overrides_with = "no_standardize")]
    standardize: bool,
    #[arg(long)]
    no_standardize: bool,
    /// Run directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
}

impl ModelOpts {
    fn settings(&self) -> Result<RunSettings, Error> {
        let cli = PartialSettings {
            k: self.k,
            clusters: self.clusters,
            lambda: self.lambda,
            r: self.r,
            beta: self.beta,
            beta_adapt: self.no_beta_adapt.then_some(false),
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            standardize: if self.no_standardize {
                Some(false)
            } else if self.standardize {
                Some(true)
            } else {
                None
            },
        };
        RunSettings::resolve(self.config.as_deref(), &cli)
    }
}

fn fmt_scores(s: &lrc_mcf::metrics::Scores) -> String {
    format!("acc {:.4}  nmi {:.4}  pur {:.4}", s.acc, s.nmi, s.pur)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Cluster { manifest, opts } => {
            let o = commands::cluster(&manifest, &opts.settings()?, &opts.out)?;
            println!(
                "{} iterations, converged: {}, labels from {}",
                o.iterations, o.converged, o.method
            );
            if let Some(s) = o.scores {
                println!("{}", fmt_scores(&s));
            }
            println!("artifacts in {}", o.out_dir.display());
        }
        Command::SweepK {
            manifest,
            k_list,
            opts,
        } => {
            let ks = k_list.unwrap_or_else(default_k_list);
            let rows = commands::sweep_k(&manifest, &ks, &opts.settings()?, &opts.out)?;
            for row in &rows {
                match &row.outcome {
                    Ok(o) => match o.scores {
                        Some(s) => println!("K={:<4} {}", row.k, fmt_scores(&s)),
                        None => println!("K={:<4} ok", row.k),
                    },
                    Err(e) => println!("K={:<4} failed: {e}", row.k),
                }
            }
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} neighbour counts failed", rows.len());
            }
            println!("table in {}", opts.out.join(commands::SWEEP_FILE).display());
        }
        Command::Synth {
            n_per_cluster,
            clusters,
            views,
            noise,
            seed,
            out,
        } => {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Config(format!(
                    "noise must be nonnegative, got {noise}"
                )));
            }
            let spec = BlobSpec {
                n_per_cluster,
                clusters,
                views,
                noise,
                seed,
            };
            let path = commands::synth(&spec, &out)?;
            println!("{}", path.display());
        }
        Command::Eval { truth, pred, out } => {
            let s = commands::eval(&truth, &pred, out.as_deref())?;
            println!("{}", fmt_scores(&s));
        }
        Command::Baseline { manifest, opts } => {
            let o = commands::baseline(&manifest, &opts.settings()?, &opts.out)?;
            if let Some(s) = o.scores {
                println!("{}", fmt_scores(&s));
            }
            println!("artifacts in {}", opts.out.display());
        }
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads(cli.threads).and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
