use clap::Parser;

fn main() -> std::process::ExitCode {
    levipick_service::cli::run(levipick_service::cli::Cli::parse())
}
