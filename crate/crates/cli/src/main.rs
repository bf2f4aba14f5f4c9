use clap::Parser;
use ldproj_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(ldproj_cli::run(&cli));
}
