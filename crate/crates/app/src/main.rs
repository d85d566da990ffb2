use std::process::ExitCode;

fn main() -> ExitCode {
    tags2v::cli::main()
}
