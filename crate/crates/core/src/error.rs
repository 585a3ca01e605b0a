use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("occupation vector has {found} entries, state has {expected} modes")]
    ModeCountMismatch { expected: usize, found: usize },

    #[error("negative photon count {0} in occupation vector")]
    NegativeCount(i64),

    #[error("photon count {0} does not fit in an occupation entry")]
    CountOverflow(i64),

    #[error("mode index {index} out of range for {mode_count} modes")]
    ModeOutOfRange { index: usize, mode_count: usize },

    #[error("mode {0} listed more than once")]
    DuplicateMode(usize),

    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("transform is {matrix}x{matrix} but touches {modes} modes")]
    TransformShape { matrix: usize, modes: usize },

    #[error("photon numbers differ: {input} in, {output} out")]
    PhotonNumberMismatch { input: u32, output: u32 },

    #[error("input must be supported on vacuum and single-photon components")]
    UnsupportedInput,

    #[error("circuit contains non-unitary elements; Kraus extraction needs a pure circuit")]
    NonUnitaryCircuit,

    #[error("degenerate source: {0}")]
    DegenerateSource(&'static str),

    #[error("{0} is zero, key rate undefined")]
    ZeroConclusive(&'static str),

    #[error("invalid circuit description at line {line}: {reason}")]
    CircuitFormat { line: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
