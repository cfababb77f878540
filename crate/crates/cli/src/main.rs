use clap::Parser;

fn main() {
    let args = match tqst_cli::config::expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    let cli = tqst_cli::Cli::parse_from(args);
    if let Err(e) = tqst_cli::run(cli, &mut std::io::stdout()) {
        eprintln!("error: {e:#}");
        std::process::exit(tqst_cli::exit_code(&e));
    }
}
