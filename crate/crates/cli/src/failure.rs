use std::path::Path;

use emseg::emvol::EmvolError;
use emseg::metrics::MetricsError;
use emseg::morphology::MorphologyError;
use emseg::postproc::PostprocError;
use emseg::sweepdsl::DslError;
use emseg::{PatchError, VolumeError};

/// Exit status for bad inputs or flags.
pub const INPUT: u8 = 2;
/// Exit status for failures of the external predictor.
pub const PREDICTOR: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub name: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(name: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code: INPUT,
            name,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::usage("IoFailure", format!("{}: {e}", path.display()))
    }

    /// Adds the offending path to the message.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::usage(e.name(), e.to_string())
            }
        }
    )*};
}

input_errors!(EmvolError, PatchError, VolumeError, MetricsError, DslError);

impl From<MorphologyError> for Failure {
    fn from(e: MorphologyError) -> Self {
        Failure::usage("InvalidRadius", e.to_string())
    }
}

impl From<PostprocError> for Failure {
    fn from(e: PostprocError) -> Self {
        Failure {
            code: if e.is_predictor_error() { PREDICTOR } else { INPUT },
            name: e.name(),
            message: e.to_string(),
        }
    }
}
