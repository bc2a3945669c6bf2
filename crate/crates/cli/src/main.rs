use clap::Parser;

fn main() {
    let cli = zfepr_cli::Cli::parse();
    if let Err(e) = zfepr_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
