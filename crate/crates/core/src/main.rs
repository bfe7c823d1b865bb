use std::process::ExitCode;

fn main() -> ExitCode {
    kmeans_stability::harness::cli::main_with_args(std::env::args_os())
}
