use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = dsrm_cli::Cli::parse();
    if let Err(e) = dsrm_cli::run(cli) {
        eprintln!("dsrm: {e}");
        std::process::exit(e.exit_code());
    }
}
