use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(spikeback::cli::run(std::env::args_os()) as u8)
}
