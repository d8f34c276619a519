use std::process::ExitCode;

fn main() -> ExitCode {
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    let status = acceptgen_cli::run(std::env::args_os().collect(), &mut out, &mut err);
    ExitCode::from(status.code())
}
