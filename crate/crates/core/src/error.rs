use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bit position {0} out of range 0..=31")]
    BitPosition(u32),

    #[error("bit error rate {0} outside (0, 1]")]
    BitErrorRate(f64),

    #[error("fault plan requests {requested} flips but only {available} distinct positions exist")]
    TooManyFaults { requested: u64, available: u64 },

    #[error("fault plan targets tensor {tensor} element {element} bit {bit}, outside the parameter layout")]
    PlanOutOfBounds { tensor: usize, element: usize, bit: u32 },

    #[error("empty parameter layout")]
    EmptyLayout,

    #[error("shape mismatch for {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("bad magic bytes {0:02x?}, expected \"VTFT\"")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated container: need {needed} bytes, file has {actual}")]
    Truncated { needed: u64, actual: u64 },

    #[error("malformed container header: {0}")]
    Header(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid campaign configuration: {0}")]
    Campaign(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
