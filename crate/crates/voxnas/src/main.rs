mod cli;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = cli::Cli::parse();
    if let Err(e) = cli::run(args) {
        // Machine-readable error on stderr, nonzero exit.
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.to_string(), "kind": e.kind() })
        );
        std::process::exit(1);
    }
}
