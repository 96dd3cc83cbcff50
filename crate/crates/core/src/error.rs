use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("no primitive {p}-th root of unity modulo {ell}")]
    NoRootExists { p: u64, ell: u64 },
    #[error("fixed points coincide")]
    DegenerateFixedPoints,
    #[error("division by zero")]
    DivisionByZero,
    #[error("set is not clustered in pairs: {0}")]
    NotClusteredInPairs(String),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("point sets differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("tree has no leaf labelled infinity")]
    NoInfinityLeaf,
    #[error("distance to a leaf is infinite")]
    LeafDistanceInfinite,
    #[error("pairs are not separated at radius {0}")]
    NotSeparated(String),
    #[error("optimality of the input set was not asserted")]
    OptimalityNotAsserted,
    #[error("infinity must be the second point of some pair")]
    NoInfinityInS,
    #[error("z coincides with the pole gamma(b) for word {0}")]
    PoleHit(String),
    #[error("no stabilisation up to word length {0}")]
    NonConvergence(usize),
    #[error("hypotheses unmet: {0}")]
    HypothesesUnmet(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
