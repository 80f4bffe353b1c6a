use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 20130;

#[derive(Debug, Parser)]
#[command(name = "pfolio", version, about = "Algorithm portfolio training and evaluation on scenario data")]
pub struct Cli {
    /// Worker threads for folds, trees and grid points (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Hyperparameter grid searched by inner cross-validation, e.g. `k=1,3,5;lambda=0.1,1`.
    #[arg(long, conflicts_with = "tune")]
    pub grid: Option<String>,

    /// Search the approach's default grid.
    #[arg(long)]
    pub tune: bool,

    /// Refit the selector on instances the pre-solving schedule leaves unsolved.
    #[arg(long)]
    pub ignore_presolved: bool,

    /// Drop algorithms whose removal does not hurt the oracle.
    #[arg(long)]
    pub filter_algorithms: bool,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a portfolio solver on a whole scenario and write the model.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        approach: String,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        training: TrainingFlags,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the execution plan of a trained model for one feature row.
    Select {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated feature values, `?` for missing.
        #[arg(long, conflicts_with = "stdin", allow_hyphen_values = true)]
        features: Option<String>,
        /// Read the feature row from standard input.
        #[arg(long)]
        stdin: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Cross-validate approaches and compare them with the baselines.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated approach ids (default: all).
        #[arg(long, value_delimiter = ',')]
        approach: Vec<String>,
        /// Folds used when the scenario has no fold file.
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[command(flatten)]
        training: TrainingFlags,
        /// Directory for `comparison.csv` and `outcomes.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Permutations per pairwise test.
        #[arg(long, default_value_t = pfolio_core::evaluation::DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = pfolio_core::evaluation::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Compare per-instance outcome files written by `evaluate`.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// `outcomes.csv` files; rows of the same approach in several files are an error.
        #[arg(required = true)]
        outcomes: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, default_value_t = pfolio_core::evaluation::DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = pfolio_core::evaluation::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static features of a ground program in smodels format, as one CSV row.
    Features {
        #[arg(conflicts_with = "stdin", required_unless_present = "stdin")]
        program: Option<PathBuf>,
        #[arg(long)]
        stdin: bool,
        /// Instance id written in the first column (default: file stem).
        #[arg(long)]
        instance: Option<String>,
        /// Print the header line before the row.
        #[arg(long)]
        header: bool,
    },
}
