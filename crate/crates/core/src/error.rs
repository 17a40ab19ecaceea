use thiserror::Error;

/// Errors produced by the geometry, objective, fusion, data, and training code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),

    #[error("off-manifold input: -C<u,v> = {0} is below 1")]
    OffManifold(f64),

    #[error("entailment cone undefined for a point at the hyperboloid apex")]
    ConeAtOrigin,

    #[error("exterior angle undefined: points coincide")]
    CoincidentPoints,

    #[error("zero-norm embedding row {0}")]
    ZeroNorm(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {len} {what}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("box outside the unit square: {0}")]
    BoxOutOfRange(String),

    #[error("box at index {0} has no objectness score")]
    Unscored(usize),

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("non-finite value at tape node {node} ({op})")]
    NonFiniteNode { node: usize, op: &'static str },

    #[error("expected a scalar output, got {0} values")]
    NonScalarOutput(usize),

    #[error("record {0} mentions no objects")]
    NoMentions(usize),

    #[error("corpus format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::CurvatureMismatch(..) => "curvature_mismatch",
            Error::OffManifold(_) => "off_manifold",
            Error::ConeAtOrigin => "cone_at_origin",
            Error::CoincidentPoints => "coincident_points",
            Error::ZeroNorm(_) => "zero_norm",
            Error::Empty(_) => "empty",
            Error::Shape(_) => "shape",
            Error::Index { .. } => "index",
            Error::DegenerateBox(_) => "degenerate_box",
            Error::BoxOutOfRange(_) => "box_out_of_range",
            Error::Unscored(_) => "unscored_box",
            Error::Invalid { .. } => "invalid_config",
            Error::NonFiniteNode { .. } => "non_finite_gradient",
            Error::NonScalarOutput(_) => "non_scalar_output",
            Error::NoMentions(_) => "no_mentions",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
