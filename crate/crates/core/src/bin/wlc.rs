use clap::Parser;

fn main() {
    let cli = wlc::cli::Cli::parse();
    std::process::exit(wlc::cli::run(cli));
}
