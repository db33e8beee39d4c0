use thiserror::Error;

/// Stage of the staged block elimination that produced an inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotStage {
    /// Meta-atoms in state 1.
    StateOne,
    /// Meta-atoms in state 0, after the state-1 block was eliminated.
    StateZero,
    /// Antenna block, after both meta-atom blocks were eliminated.
    Antennas,
    /// A dense inverse outside the staged elimination.
    Dense,
}

impl std::fmt::Display for PivotStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PivotStage::StateOne => "state-1 meta-atom block",
            PivotStage::StateZero => "state-0 meta-atom block",
            PivotStage::Antennas => "antenna block",
            PivotStage::Dense => "dense matrix",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular pivot in {stage} (condition estimate {condition:.3e})")]
    SingularPivot { stage: PivotStage, condition: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coincident points: Green's function undefined at zero separation")]
    CoincidentPoints,

    #[error("placement failed: placed {placed} of {requested} entities within the retry cap")]
    Placement { placed: usize, requested: usize },

    #[error("empty mask: at least one coefficient must be included")]
    EmptyMask,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("phaseless data: {0}")]
    Phaseless(String),
}

pub type Result<T> = std::result::Result<T, Error>;
