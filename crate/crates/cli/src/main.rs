use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(agilecc_cli::main_with(std::env::args_os()))
}
