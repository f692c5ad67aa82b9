use clap::error::ErrorKind;
use clap::Parser;

use hybridtail::cli::{run, Cli};
use hybridtail::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).record());
            std::process::exit(2);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("{}", e.record());
        std::process::exit(e.exit_code());
    }
}
