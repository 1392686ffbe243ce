//! Command failures and their exit codes.

use std::fmt;

use confalign::confidence::RecordsFileError;
use confalign::pipeline::PipelineError;
use confalign::{BackendError, DataError, PreferenceError};

/// 1 usage/config, 2 backend, 3 data.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Backend(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Backend(_) => 2,
            Failure::Data(_) => 3,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, err) = match self {
            Failure::Usage(e) => ("configuration error", e),
            Failure::Backend(e) => ("backend failure", e),
            Failure::Data(e) => ("data error", e),
        };
        write!(f, "{kind}: {err}")?;
        // Many errors already embed their source in their own message.
        let mut shown = err.to_string();
        for cause in err.chain().skip(1) {
            let msg = cause.to_string();
            if !shown.contains(&msg) {
                write!(f, ": {msg}")?;
                shown = msg;
            }
        }
        Ok(())
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) | BackendError::InvalidRequest(_) => Failure::Usage(e.into()),
            _ => Failure::Backend(e.into()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::AllRequestsFailed(inner) => {
                let code = Failure::from(inner.clone());
                let err = anyhow::Error::from(PipelineError::AllRequestsFailed(inner));
                match code {
                    Failure::Usage(_) => Failure::Usage(err),
                    _ => Failure::Backend(err),
                }
            }
            other => Failure::Data(other.into()),
        }
    }
}

macro_rules! data_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}

data_failure!(DataError, PreferenceError, RecordsFileError);

/// Attaches a failure class to any error.
pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}
