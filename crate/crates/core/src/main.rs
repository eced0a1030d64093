use clap::Parser;
use mroc::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
