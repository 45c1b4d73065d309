use thiserror::Error;

/// Errors produced by dataset ingestion, matrix construction, clustering,
/// labelling, classification and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feature dimension mismatch for image '{image_id}': expected {expected}, found {found}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate image_id '{0}'")]
    DuplicateImageId(String),

    #[error("plant '{0}' appears in both train and test splits")]
    PlantSplitConflict(String),

    #[error("plant '{0}' carries more than one true label")]
    PlantLabelConflict(String),

    #[error("dataset has an empty train split")]
    EmptyTrainSplit,

    #[error("cannot L2-normalise a zero vector")]
    ZeroVector,

    #[error("row {0} has zero norm; cosine similarity undefined")]
    ZeroNormRow(usize),

    #[error("row {0} has zero degree; propagation matrix undefined")]
    ZeroDegreeRow(usize),

    #[error("expected a {expected} matrix, got {found}")]
    MatrixKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("cluster {0} has no exemplar")]
    ClusterWithoutExemplar(usize),

    #[error("no exemplars supplied")]
    NoExemplars,

    #[error("training set contains a single class; classifier undefined")]
    SingleClass,

    #[error("unknown image_id '{0}' in annotations")]
    UnknownImageId(String),

    #[error("unknown class label '{0}'")]
    UnknownLabel(String),

    #[error("strategy {0} requires an explicit exemplar budget")]
    BudgetRequired(String),

    #[error("strategy {0} determines its exemplar count automatically; budget not allowed")]
    BudgetForbidden(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
