use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match bmcond_cli::main_with(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bmcond: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
