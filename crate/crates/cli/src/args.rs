use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "idlink", version, about = "Link user identities across two attributed networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file of `section.key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for stage artifacts and reports (synthetic data for `synth`)
    #[arg(long, global = true, value_name = "DIR", default_value = "idlink-out")]
    pub out_dir: PathBuf,

    /// Master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// full, attrs_only, struct_only or no_projection
    #[arg(long, global = true)]
    pub variant: Option<String>,

    /// Directory holding users_x.tsv, edges_x.txt, users_y.tsv, edges_y.txt and pairs.tsv
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Override one setting, e.g. `--set rcca.k_proj=25` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Also write CSV copies of feature matrices
    #[arg(long, global = true)]
    pub csv: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic network pair with a known alignment
    Synth(SynthArgs),
    /// Embed every level used by the variant
    Embed,
    /// Stack and standardize the level features
    Fuse,
    /// Split pairs and fit the projection for each repetition
    #[command(alias = "rcca")]
    Train,
    /// Rank candidates for every test query
    Match,
    /// Score rankings and write the report
    Eval,
    /// Run every stage, or only `--stage` using cached upstream artifacts
    Run {
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Print the resolved configuration
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Embed,
    Fuse,
    #[value(alias = "rcca")]
    Train,
    Match,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::Fuse => "fuse",
            Stage::Train => "train",
            Stage::Match => "match",
            Stage::Eval => "eval",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub users: usize,
    /// Edges per arriving node in preferential attachment
    #[arg(long, default_value_t = 6)]
    pub attachment_m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub edge_drop: f64,
    #[arg(long, default_value_t = 0.2)]
    pub attr_drop: f64,
    #[arg(long, default_value_t = 0.05)]
    pub char_noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub word_swap: f64,
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
}
