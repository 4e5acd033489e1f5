use std::process::ExitCode;

fn main() -> ExitCode {
    herdlab::cli::run_from(std::env::args_os())
}
