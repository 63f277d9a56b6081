use rarecause_core::Error;

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        message: message.into(),
    }
}

impl Failure {
    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }
}

/// Bad parameters are usage errors; everything about the input data is a
/// data error.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) => usage(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}
