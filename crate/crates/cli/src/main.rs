use std::process::ExitCode;

fn main() -> ExitCode {
    resplit_cli::commands::main()
}
