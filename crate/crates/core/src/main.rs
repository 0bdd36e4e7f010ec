use clap::Parser;

use twoclass_ar::cli::{self, Cli};

fn main() {
    std::process::exit(cli::run(Cli::parse()));
}
