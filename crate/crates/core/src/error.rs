use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "label attribute `{0}` is listed in the label header but not declared in the ARFF file"
    )]
    MissingLabelAttribute(String),

    #[error("malformed ARFF at line {line}: {message}")]
    MalformedArff { line: usize, message: String },

    #[error("malformed label header: {0}")]
    MalformedXml(String),

    #[error("label `{label}` has non-binary value `{value}` at line {line}")]
    NonBinaryLabel {
        label: String,
        value: String,
        line: usize,
    },

    #[error("every label has a single class; imbalance statistics are undefined")]
    AllLabelsDegenerate,

    #[error(
        "undersampling requires both classes (positives: {positives}, negatives: {negatives})"
    )]
    SingleClassInput { positives: usize, negatives: usize },

    #[error("label {0} has a single class in the training data")]
    SingleClassLabel(usize),

    #[error("feature vector has length {got}, model expects {expected}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("label {0} has zero minority examples")]
    ZeroMinorityCount(usize),

    #[error("no label has both classes present; nothing to train")]
    NoTrainableLabels,

    #[error("{method} needs at least two trainable labels, found {found}")]
    TooFewLabels { method: String, found: usize },

    #[error("length mismatch: {scores} scores vs {truth} truth values")]
    LengthMismatch { scores: usize, truth: usize },

    #[error("every value is undefined")]
    AllUndefined,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable kind used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingLabelAttribute(_) => "missing_label_attribute",
            Error::MalformedArff { .. } => "malformed_arff",
            Error::MalformedXml(_) => "malformed_xml",
            Error::NonBinaryLabel { .. } => "non_binary_label",
            Error::AllLabelsDegenerate => "all_labels_degenerate",
            Error::SingleClassInput { .. } => "single_class_input",
            Error::SingleClassLabel(_) => "single_class_label",
            Error::ArityMismatch { .. } => "arity_mismatch",
            Error::ZeroMinorityCount(_) => "zero_minority_count",
            Error::NoTrainableLabels => "no_trainable_labels",
            Error::TooFewLabels { .. } => "too_few_labels",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::AllUndefined => "all_undefined",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by invalid configuration rather than bad input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::TooFewLabels { .. })
    }
}
