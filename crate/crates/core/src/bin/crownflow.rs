use clap::Parser;
use crownflow::cli::{run, Args};

fn main() {
    std::process::exit(run(&Args::parse()));
}
