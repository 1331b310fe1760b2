use std::process::ExitCode;

use clap::Parser;

#[tokio::main]
async fn main() -> ExitCode {
    let cli = cxrkit::Cli::parse();
    match cxrkit::run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cxrkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
