use clap::Parser;

fn main() {
    let cli = bevlift_cli::Cli::parse();
    if let Err(e) = bevlift_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
