use clap::Parser;

use busemann_lab::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
