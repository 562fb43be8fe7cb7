use clap::Parser;
use dissipative_dicke::cli::{self, Cli};

fn main() {
    std::process::exit(cli::run(Cli::parse()));
}
