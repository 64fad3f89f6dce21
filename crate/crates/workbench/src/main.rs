use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use strateval_workbench::cli::Cli;
use strateval_workbench::failure::Status;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Status::Success.into(),
                _ => Status::Usage.into(),
            };
        }
    };
    match strateval_workbench::run(&cli) {
        Ok(out) => {
            print!("{out}");
            Status::Success.into()
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.status.into()
        }
    }
}
