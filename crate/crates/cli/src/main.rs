//! `xma`: stage-by-stage driver. Exit codes: 0 success, 1 invalid input or
//! usage, 2 runtime failure.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod fail;

use fail::Failure;

#[derive(Parser)]
#[command(name = "xma", version, about = "Meme-to-video label alignment, re-annotation and fine-tune export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest, or prepare a run's data from its config.
    Ingest(commands::IngestArgs),
    /// Map a dataset's labels onto a task and report the counts.
    Remap(commands::RemapArgs),
    /// Few-shot model pass over the memes; fills the disagreement queue.
    Predict(commands::PredictArgs),
    /// Score each shot count on the video test split.
    Sweep(commands::SweepArgs),
    /// Inspect or drain the re-annotation queue.
    Queue {
        #[command(subcommand)]
        command: commands::QueueCommand,
    },
    /// Serve the annotation API and console.
    Serve(commands::ServeArgs),
    /// Write the re-annotated meme manifest once the queue is drained.
    Finalize(commands::FinalizeArgs),
    /// Write fine-tuning manifests.
    Export(commands::ExportArgs),
    /// Score prediction files against ground truth.
    Eval(commands::EvalArgs),
    /// Items one prediction file fixes or breaks relative to another.
    Diff(commands::DiffArgs),
    /// Class distribution before and after re-annotation.
    Dist(commands::DistArgs),
    /// Estimate annotation hours.
    Cost(commands::CostArgs),
    /// Render the saved reports of a run.
    Report(commands::ReportArgs),
    /// Write the synthetic mini-corpus.
    Synth(commands::SynthArgs),
    /// Every stage in order.
    Run(commands::RunAllArgs),
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Ingest(a) => commands::ingest(a),
        Command::Remap(a) => commands::remap(a),
        Command::Predict(a) => commands::predict(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Queue { command } => commands::queue(command),
        Command::Serve(a) => commands::serve(a),
        Command::Finalize(a) => commands::finalize(a),
        Command::Export(a) => commands::export(a),
        Command::Eval(a) => commands::eval(a),
        Command::Diff(a) => commands::diff(a),
        Command::Dist(a) => commands::dist(a),
        Command::Cost(a) => commands::cost(a),
        Command::Report(a) => commands::report(a),
        Command::Synth(a) => commands::synth(a),
        Command::Run(a) => commands::run_all(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
