use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nbmatch::features::HistogramBy;
use nbmatch::ingest::Label;
use nbmatch::pipeline::{self, RunConfig, SplitSide, TableConfig};
use nbmatch::simulate::SimConfig;
use nbmatch::ThresholdPolicy;

#[derive(Parser)]
#[command(name = "nbmatch", version, about = "Negative binomial record linkage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Tables {
    /// Schema file (TOML)
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    table_a: PathBuf,
    /// Second table; omit for single-table deduplication
    #[arg(long)]
    table_b: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    tables: Tables,
    /// Labelled pairs file (`id_a,id_b,label`)
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// max_f1, max_f0.5 or precision_floor=<p>
    #[arg(long, default_value = "max_f0.5")]
    policy: ThresholdPolicy,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Divide each log score by the number of features it used
    #[arg(long)]
    average_per_feature: bool,
}

impl Run {
    fn config(&self) -> RunConfig {
        RunConfig {
            schema: self.tables.schema.clone(),
            table_a: self.tables.table_a.clone(),
            table_b: self.tables.table_b.clone(),
            pairs: self.pairs.clone(),
            seed: self.seed,
            train_fraction: self.train_fraction,
            policy: self.policy,
            out_dir: self.out_dir.clone(),
            average_per_feature: self.average_per_feature,
        }
    }
}

#[derive(Args)]
struct ModelTables {
    /// Schema file; defaults to the schema stored in the model
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    table_a: PathBuf,
    #[arg(long)]
    table_b: Option<PathBuf>,
}

impl ModelTables {
    fn config(&self) -> TableConfig {
        TableConfig {
            schema: self.schema.clone(),
            table_a: self.table_a.clone(),
            table_b: self.table_b.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum ByArg {
    Class,
    Feature,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Match,
    Nonmatch,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model on the training split and pick its threshold
    Train(Run),
    /// Evaluate a saved model on the held-out (or training) split
    Evaluate {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Score pairs with a saved model
    Score {
        #[command(flatten)]
        tables: ModelTables,
        #[arg(long)]
        model: PathBuf,
        /// Pairs to score; every candidate pair when omitted
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Cap on the number of candidate pairs generated
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value = "scores.csv")]
        out: PathBuf,
    },
    /// Absorb confirmed matches into a saved model
    Update {
        #[command(flatten)]
        tables: ModelTables,
        #[arg(long)]
        model: PathBuf,
        /// Confirmed match pairs (`id_a,id_b[,label]`)
        #[arg(long)]
        confirmed: PathBuf,
        /// Where to write the updated model
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the Fellegi-Sunter baseline next to the negative binomial model
    Baseline(Run),
    /// Generate a synthetic labelled dataset
    Simulate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 2)]
        n_features: usize,
        /// Number of match pairs
        #[arg(long)]
        n_pairs: usize,
        /// Number of non-match pairs; defaults to --n-pairs
        #[arg(long)]
        n_nonmatches: Option<usize>,
        /// Added to the match mean to get the non-match Poisson rate
        #[arg(long, default_value_t = 10.0)]
        nonmatch_shift: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "sim")]
        out_dir: PathBuf,
    },
    /// Edit-distance histograms for plotting
    Histogram {
        #[command(flatten)]
        tables: Tables,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value = "class")]
        by: ByArg,
        /// Restrict to one label
        #[arg(long, value_enum)]
        label: Option<LabelArg>,
        #[arg(long, default_value = "histogram.csv")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> nbmatch::Result<()> {
    match cli.command {
        Command::Train(run) => {
            let out = pipeline::cmd_train(&run.config())?;
            let r = &out.report.report;
            println!(
                "model written to {} (threshold {}, training AUC {:.4})",
                out.model_path.display(),
                r.threshold,
                r.auc
            );
        }
        Command::Evaluate { run, model, split } => {
            let side = match split {
                SplitArg::Train => SplitSide::Train,
                SplitArg::Test => SplitSide::Test,
            };
            let out = pipeline::cmd_evaluate(&run.config(), &model, side)?;
            let r = &out.report;
            println!(
                "tp {} fp {} fn {} tn {}\nauc {:.4} precision {:.4} recall {:.4} accuracy {:.4}",
                r.tp, r.fp, r.fn_, r.tn, r.auc, r.precision, r.recall, r.accuracy
            );
        }
        Command::Score {
            tables,
            model,
            pairs,
            limit,
            out,
        } => {
            let s = pipeline::cmd_score(&tables.config(), &model, pairs.as_deref(), limit, &out)?;
            println!(
                "{} scored, {} match, {} unscorable -> {}",
                s.scored,
                s.matches,
                s.unscorable,
                out.display()
            );
        }
        Command::Update {
            tables,
            model,
            confirmed,
            out,
        } => {
            let m = pipeline::cmd_update(&tables.config(), &model, &confirmed, &out)?;
            println!("model version {} written to {}", m.version, out.display());
        }
        Command::Baseline(run) => {
            let out = pipeline::cmd_baseline(&run.config())?;
            println!(
                "test AUC: negative binomial {:.4}, Fellegi-Sunter {:.4}",
                out.nb_test.report.auc, out.fs_test.report.auc
            );
        }
        Command::Simulate {
            alpha,
            beta,
            n_features,
            n_pairs,
            n_nonmatches,
            nonmatch_shift,
            seed,
            out_dir,
        } => {
            let cfg = SimConfig {
                n_nonmatches: n_nonmatches.unwrap_or(n_pairs),
                nonmatch_shift,
                ..SimConfig::new(alpha, beta, n_features, n_pairs, seed)
            };
            let paths = pipeline::cmd_simulate(&cfg, &out_dir)?;
            println!("wrote {}", paths.pairs.parent().unwrap_or(&out_dir).display());
        }
        Command::Histogram {
            tables,
            pairs,
            by,
            label,
            out,
        } => {
            let cfg = TableConfig {
                schema: Some(tables.schema),
                table_a: tables.table_a,
                table_b: tables.table_b,
            };
            let by = match by {
                ByArg::Class => HistogramBy::Class,
                ByArg::Feature => HistogramBy::Feature,
            };
            let only = label.map(|l| match l {
                LabelArg::Match => Label::Match,
                LabelArg::Nonmatch => Label::NonMatch,
            });
            let h = pipeline::cmd_histogram(&cfg, &pairs, by, only, &out)?;
            println!("{} histogram rows -> {}", h.rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
