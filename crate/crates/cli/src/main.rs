use std::process::ExitCode;

fn main() -> ExitCode {
    blockopt_cli::app::main_with(std::env::args_os()).into()
}
