use std::path::PathBuf;

/// Crate-wide error type. Variants are grouped by the subsystem that raises
/// them; the CLI maps each group onto a distinct exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ---- words and lexicons ----
    #[error("invalid character {ch:?} in {word:?}: only [a-z0-9] are allowed")]
    InvalidCharacter { word: String, ch: char },

    #[error("empty word")]
    EmptyWord,

    #[error("word {word:?} is {len} characters long, maximum is {max}")]
    TooLong { word: String, len: usize, max: usize },

    #[error("lexicon contains no words")]
    EmptyLexicon,

    // ---- resemblant generation ----
    #[error(
        "requested {requested} resemblants for {label:?} but only {available} \
         distinct single-substitution variants exist"
    )]
    InfeasibleCount {
        label: String,
        requested: usize,
        available: usize,
    },

    // ---- model and numerics ----
    #[error("non-finite values encountered in model parameters or activations")]
    NonFiniteParams,

    #[error("non-finite training loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("embedding norm {norm:.3e} is below {min:.0e}; cannot normalize")]
    DegenerateEmbedding { norm: f64, min: f64 },

    #[error("text of length {len} does not fit the model sequence length {max}")]
    TextTooLong { len: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // ---- file stores ----
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("incompatible file header: {0}")]
    VersionMismatch(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("index cache digest does not match the lexicon; rebuild the cache")]
    DigestMismatch,

    #[error("report failed validation: {0}")]
    InvalidReport(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
