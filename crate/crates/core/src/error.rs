use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimensions must be at least 1x1 (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("dimension overflow while padding {0}")]
    CapacityOverflow(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("block ({row}, {col}) outside the {rows}x{cols} block grid")]
    BlockOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("inner dimensions differ: A is {m}x{k_a}, B is {k_b}x{n}")]
    InnerDimension { m: usize, k_a: usize, k_b: usize, n: usize },

    #[error("schedule failed verification: {0}")]
    UnverifiedSchedule(String),

    #[error("empty operand list")]
    EmptyOperands,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("intermediate stream overflow (depth {0})")]
    StreamOverflow(usize),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error("malformed platform file line {line}: {msg}")]
    Platform { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
