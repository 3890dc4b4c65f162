use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("position ({x:.3}, {y:.3}, {z:.3}) coincides with AP {ap}")]
    CoincidentWithAp { ap: usize, x: f64, y: f64, z: f64 },

    #[error("position ({x:.3}, {y:.3}) lies outside the floor plan")]
    OutsideFloorPlan { x: f64, y: f64 },

    #[error("empty grid: spacing {spacing} m leaves no point inside the floor plan")]
    EmptyGrid { spacing: f64 },

    #[error("all CSI blocks are zero, SNR is undefined")]
    AllZeroCsi,

    #[error("zero CSI: {0}")]
    ZeroCsi(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid triplet exists for T_c = {t_c} s, T_f = {t_f} s")]
    NoTriplets { t_c: f64, t_f: f64 },

    #[error("empty triplet set")]
    EmptyTriplets,

    #[error("expected feature of sample {sample} is zero")]
    ZeroExpectedFeature { sample: usize },

    #[error("rank-deficient affine design: chart positions are collinear")]
    RankDeficient,

    #[error("joint entropy of quantized distances is zero")]
    ZeroJointEntropy,

    #[error("stale forward cache: model generation {model}, cache generation {cache}")]
    StaleCache { model: u64, cache: u64 },

    #[error("non-finite gradient in {param} (first bad value {value})")]
    NonFiniteGradient { param: String, value: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged {
        iteration: usize,
        loss: f64,
        checkpoint: Box<crate::model::ChartModel>,
    },

    #[error("missing side information: {0}")]
    MissingSideInfo(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Container(#[from] crate::io::container::ContainerError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
