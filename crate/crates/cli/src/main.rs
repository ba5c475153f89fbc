mod cli;
mod commands;
mod config;

use clap::Parser;
use cli::{Cli, Command};
use config::UsageError;

fn main() {
    // clap exits with 2 on its own parse failures
    let args = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&args.log_level)
        .format_timestamp(None)
        .init();

    let threads = args.threads;
    let result = match args.command {
        Command::Gen(a) => commands::run_gen(a, threads),
        Command::BuildVocab(a) => commands::run_build_vocab(a),
        Command::Train(a) => commands::run_train(a),
        Command::Predict(a) => commands::run_predict(a),
        Command::Eval(a) => commands::run_eval(a),
        Command::Diversity(a) => commands::run_diversity(a),
        Command::Attention(a) => commands::run_attention(a),
    };

    match result {
        Ok(()) => {}
        Err(err) => {
            if err.downcast_ref::<UsageError>().is_some() {
                eprintln!("usage error: {err}");
                std::process::exit(2);
            }
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
