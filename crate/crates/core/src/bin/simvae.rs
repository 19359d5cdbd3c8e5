use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(simvae::cli::run(std::env::args_os()) as u8)
}
