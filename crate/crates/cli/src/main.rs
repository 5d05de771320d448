use clap::Parser;

fn main() {
    let cli = steercloud_cli::Cli::parse();
    if let Err(err) = steercloud_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
