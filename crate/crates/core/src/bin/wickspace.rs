use clap::Parser;

fn main() {
    let cli = wickspace::cli::Cli::parse();
    std::process::exit(wickspace::cli::main_with(cli));
}
