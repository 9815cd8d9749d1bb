use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod analysis;
mod study;

#[derive(Parser)]
#[command(name = "choicescore", version, about = "Absolute risk labels from best-worst expert choices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// D-optimal profile designs
    #[command(subcommand)]
    Design(analysis::DesignCmd),
    /// Questionnaire generation and pair coverage
    #[command(subcommand)]
    Quest(analysis::QuestCmd),
    /// Turn collected choices into labels
    #[command(subcommand)]
    Score(analysis::ScoreCmd),
    /// Oracle simulations
    #[command(subcommand)]
    Sim(analysis::SimCmd),
    /// Fit and evaluate the linear risk scorer
    #[command(subcommand)]
    Model(analysis::ModelCmd),
    /// Study lifecycle and the HTTP service
    Study {
        /// Directory holding study state.
        #[arg(long, env = "CHOICESCORE_DATA_DIR", default_value = "choicescore-data", global = true)]
        data_dir: PathBuf,
        #[command(subcommand)]
        command: study::StudyCmd,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Design(cmd) => analysis::design(cmd),
        Command::Quest(cmd) => analysis::quest(cmd),
        Command::Score(cmd) => analysis::score(cmd),
        Command::Sim(cmd) => analysis::sim(cmd),
        Command::Model(cmd) => analysis::model(cmd),
        Command::Study { data_dir, command } => study::run(&data_dir, command),
    }
}
