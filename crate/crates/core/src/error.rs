use thiserror::Error;

/// Errors raised by the library. Each variant names the failing object so
/// reports can carry it without extra context.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("evaluation at {point} needs points at or beyond the window bound {bound}")]
    BoundaryEscape { point: u64, bound: u64 },
    #[error("invalid window: bound {bound} must exceed margin {margin}")]
    InvalidWindow { bound: u64, margin: u64 },
    #[error("invalid expression: {0}")]
    InvalidExpr(String),
    #[error("sets of sizes {left} and {right} cannot be matched")]
    SizeMismatch { left: usize, right: usize },
    #[error("index sets {first} and {second} are not almost disjoint")]
    NotAlmostDisjoint { first: usize, second: usize },
    #[error("coefficients sum to {sum}, expected 0")]
    NonZeroSum { sum: i64 },
    #[error("window {bound} is too small: {reason}")]
    InsufficientWindow { bound: u64, reason: String },
    #[error("map is not injective off the leakage set at {point}")]
    NotInjectiveOffB { point: u64 },
    #[error("map moves {point} out of its block")]
    NotBlockPreserving { point: u64 },
    #[error("block containing {point} is not invariant")]
    BlockNotInvariant { point: u64 },
    #[error("no designated generator for class size {size}")]
    NoDesignatedGenerator { size: usize },
    #[error("point {point} already lies in the infinite part")]
    InInfinitePart { point: u64 },
    #[error("class of {point} is not complete in the window")]
    IncompleteClass { point: u64 },
    #[error("no suitable class pair above {k} in the window")]
    NoSuitableClassPair { k: u64 },
    #[error("hypothesis fails at class {class}: {detail}")]
    HypothesisFails { class: usize, detail: String },
    #[error("ratio bound violated at {point}")]
    A4Violated { point: u64 },
    #[error("window exhausted: {0}")]
    WindowExhausted(String),
    #[error("input is the identity")]
    IdentityInput,
    #[error("classes {first} and {second} are not isomorphic")]
    ClassesNotIsomorphic { first: usize, second: usize },
    #[error("block {block} violates: {reason}")]
    BlockViolation { block: usize, reason: String },
    #[error("growth condition fails at index {index}")]
    GrowthViolated { index: usize },
    #[error("n = {n} exceeds the cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
