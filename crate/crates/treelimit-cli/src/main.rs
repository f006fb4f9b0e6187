//! Batch front-end: seeded, parallel experiment runs with JSON and CSV
//! reports on disk.
//!
//! Exit codes: 0 on pass, 1 when a statistical gate fails, 2 on usage
//! errors. For a fixed configuration and seed the report bytes are
//! identical at any worker count.

mod commands;
mod selftest;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "treelimit",
    about = "Growing binary trees, their limit measures, and Monte Carlo checks of the limit laws",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every experiment. Flags override the config file;
/// the config file overrides the TREELIMIT_SEED environment variable.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed (64-bit). Replicate seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow one trajectory and write its insertion log.
    Grow {
        #[command(flatten)]
        common: Common,
        /// Growth model: dst | bst | remy.
        #[arg(long)]
        model: Option<String>,
        /// Driving measure for dst (see measure syntax in the README).
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sample uniform trees at one size and report the top split.
    Uniform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<u64>,
    },
    /// Covariance of the scaled subtree-size fluctuations vs the closed form.
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated node words; empty token or `root` is the root.
        #[arg(long)]
        nodes: Option<String>,
    },
    /// Two-arm mixture experiment for rank-insertion growth.
    BstMixture {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        nodes: Option<String>,
        #[arg(long)]
        shape_depth: Option<usize>,
        #[arg(long)]
        shape_reps: Option<usize>,
    },
    /// Local increment diagnostics along one digital-growth run.
    Increments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        nodes: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        block_len: Option<usize>,
        #[arg(long)]
        shuffles: Option<usize>,
        /// Also write one step,value CSV per node.
        #[arg(long)]
        dump_series: bool,
    },
    /// Subtree-size convergence trace along one growth run.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        measure: Option<String>,
        /// Node word to follow (empty or `root` for the root).
        #[arg(long)]
        node: Option<String>,
        /// Comma-separated checkpoint sizes.
        #[arg(long)]
        checkpoints: Option<String>,
    },
    /// Depth-K cylinder view of the boundary-measure embedding of a grown tree.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Exact-identity self test at small sizes.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Additionally run the additivity scan on this table measure,
        /// loaded without normalization checks (negative-control hook).
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

/// Optional values a config file may supply; any unset field falls back to
/// the built-in default.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<String>,
    pub measure: Option<String>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub nodes: Option<String>,
    pub node: Option<String>,
    pub depth: Option<u32>,
    pub horizon: Option<usize>,
    pub block_len: Option<usize>,
    pub shuffles: Option<usize>,
    pub checkpoints: Option<String>,
    pub shape_depth: Option<usize>,
    pub shape_reps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
