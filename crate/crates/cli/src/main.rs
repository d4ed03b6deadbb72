use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = eto_cli::run_from(std::env::args_os());
    print!("{}", outcome.stdout);
    ExitCode::from(outcome.code as u8)
}
