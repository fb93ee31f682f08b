use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let code = udn_core::cli::run(&argv, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
