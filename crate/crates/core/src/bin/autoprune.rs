use std::process::ExitCode;

fn main() -> ExitCode {
    autoprune::harness::cli::main_with(std::env::args_os())
}
