use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(phonon_cat::cli::main())
}
