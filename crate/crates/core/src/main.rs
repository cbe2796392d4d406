use std::process::ExitCode;

fn main() -> ExitCode {
    sigres::cli::main_with_args(std::env::args_os())
}
