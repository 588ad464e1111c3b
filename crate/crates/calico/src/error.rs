//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Program text did not parse; `pos` is a byte offset into the input.
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    /// An operation node has the wrong number of dependencies or arguments.
    #[error("arity error at node {node}: {msg}")]
    Arity { node: usize, msg: String },

    /// A name (operation type, attribute, concept, relationship, ...) is not
    /// in the vocabulary.
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    /// Structural validation of a program failed (bad indices, wrong root,
    /// cycles, orphan nodes, ...).
    #[error("invalid program: {0}")]
    InvalidProgram(String),

    /// Requested node removal is not allowed.
    #[error("node {node} is not removable: {msg}")]
    NotRemovable { node: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A record in a JSON/JSONL file was malformed; `line` is 1-based
    /// (0 for whole-file formats).
    #[error("schema error in {path} line {line}: {msg}")]
    Schema {
        path: String,
        line: usize,
        msg: String,
    },

    /// Tensor shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Normalizing a (near-)zero vector.
    #[error("cannot normalize near-zero vector (|v| = {norm:.3e})")]
    ZeroVector { norm: f64 },

    /// An answer decode was requested over an empty candidate set.
    #[error("empty candidate set for {0}")]
    EmptyCandidates(String),

    /// A gold answer is not in the candidate set the program can produce.
    #[error("gold answer `{answer}` not among candidates for {context}")]
    UnknownAnswer { answer: String, context: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
