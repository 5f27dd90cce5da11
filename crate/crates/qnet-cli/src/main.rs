use clap::Parser;

fn main() {
    let cli = qnet_cli::Cli::parse();
    std::process::exit(qnet_cli::run(&cli));
}
