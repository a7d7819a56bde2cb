//! Dataset preprocessing: infrequent-class removal, a reproducible
//! per-class validation split, and squish-resizing of decoded images.

mod manifest;
mod resize;

pub use manifest::{filter_infrequent, load_manifest, make_val_split, DatasetManifest, SampleRecord, Split};
pub use resize::{squish_resize, PixelBuffer, CHANNELS};

/// Default minimum number of samples for a class to be kept.
pub const DEFAULT_MIN_SAMPLES: usize = 500;
/// Default number of validation samples drawn per class.
pub const DEFAULT_VAL_PER_CLASS: usize = 50;
/// Default output side length for squish-resizing.
pub const DEFAULT_RESOLUTION: usize = 224;

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("no class has at least {min_samples} samples")]
    EmptyResult { min_samples: usize },
    #[error("class `{class_id}` has {count} samples, needs more than {per_class} for the validation split")]
    ClassTooSmall {
        class_id: String,
        count: usize,
        per_class: usize,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
