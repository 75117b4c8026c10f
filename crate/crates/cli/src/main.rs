use std::process::ExitCode;

fn main() -> ExitCode {
    eegwgan_cli::main_with(std::env::args_os())
}
