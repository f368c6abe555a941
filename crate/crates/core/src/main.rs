use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(prodstat::cli::run(std::env::args_os()))
}
