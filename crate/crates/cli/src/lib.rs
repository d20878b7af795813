//! Command-line front end and teleop service.

pub mod commands;
pub mod exit;
pub mod manifest;
pub mod teleop;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use exit::{Failure, Status};

/// Parses `args` (program name first), runs the command and reports the
/// outcome on standard error.
pub fn run<I, T>(args: I) -> Status
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Status::Ok,
                _ => Status::Usage,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => Status::Ok,
        Err(f) => {
            eprintln!("error: {f}");
            f.status
        }
    }
}
