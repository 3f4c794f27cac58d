use std::process::ExitCode;

fn main() -> ExitCode {
    adaptive_msr::cli::run(std::env::args_os())
}
