use std::process::ExitCode;

use unimvt::cli::{exit_code, run, Args, USAGE};

fn main() -> ExitCode {
    let result = Args::parse(std::env::args().skip(1)).and_then(run);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, unimvt::Error::Usage(_)) {
                eprint!("{USAGE}");
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
