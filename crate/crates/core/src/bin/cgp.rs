use clap::Parser;

use cgp_core::cli::{configure_threads, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    std::process::exit(run(Cli::parse()));
}
