//! Command-line front end for the `magnitude` crate.

pub mod args;
pub mod commands;
pub mod serve;
pub mod serve_cmd;

/// Process exit status for a failed run.
///
/// 2 is reserved for usage errors reported by the argument parser.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use magnitude::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.root() {
                Error::InvalidInput(_) => 3,
                Error::DegenerateInput { .. } => 4,
                Error::IllConditioned { .. } => 5,
                Error::Io(_) | Error::Csv(_) | Error::Json(_) => 6,
                Error::InClass { .. } => 1,
            };
        }
    }
    1
}
