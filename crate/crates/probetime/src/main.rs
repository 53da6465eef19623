use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(probetime::run(std::env::args_os()))
}
