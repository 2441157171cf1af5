use clap::Parser;

fn main() {
    std::process::exit(nrcgme::cli::run(nrcgme::cli::Cli::parse()));
}
