use clap::Parser;

fn main() {
    let cli = dpilqr::cli::Cli::parse();
    std::process::exit(dpilqr::cli::run(cli));
}
