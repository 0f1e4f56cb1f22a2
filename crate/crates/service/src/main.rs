use clap::Parser;

fn main() -> std::process::ExitCode {
    zeittafel_service::cli::main_with(zeittafel_service::cli::Cli::parse())
}
