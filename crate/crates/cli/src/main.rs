use std::process::ExitCode;

fn main() -> ExitCode {
    autorefine_cli::run(std::env::args_os())
}
