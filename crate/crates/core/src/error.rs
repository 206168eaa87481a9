use thiserror::Error;

/// Errors produced by the reduction, evolution and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unassigned symbol `{0}`")]
    UnassignedSymbol(String),

    #[error("division by zero coupling `{0}`")]
    DivisionByZeroCoupling(String),

    #[error("site not reducible: occupation {occupation} below {required} at {site}")]
    SiteNotReducible {
        site: String,
        occupation: u32,
        required: u32,
    },

    #[error("vanishing quartic coupling at reduced site {0}")]
    VanishingTopCoupling(String),

    #[error("nonzero bond coupling {0} in random-field reduction")]
    NonzeroBondCoupling(String),

    #[error("singular kinetic operator")]
    SingularKineticOperator,

    #[error("occupation underflow at {site}: shift {shift} from occupation {occupation}")]
    OccupationUnderflow {
        site: String,
        occupation: u32,
        shift: i64,
    },

    #[error("parity not a symmetry: odd potential coefficient at {0}")]
    ParityNotASymmetry(String),

    #[error("enumeration too large: {0} primitive indices")]
    EnumerationTooLarge(u128),

    #[error("tolerance unachievable: requested {requested}, rounding floor {floor}")]
    ToleranceUnachievable { requested: f64, floor: f64 },

    #[error("non-integrable potential: {0}")]
    NonIntegrablePotential(String),

    #[error("non-integrable action: {0}")]
    NonIntegrableAction(String),

    #[error("singular flow point: {0}")]
    SingularFlowPoint(String),

    #[error("step underflow at parameter {at}: step {step} below minimum")]
    StepUnderflow { at: f64, step: f64 },

    #[error("dimension too large for {method}: {sites} sites exceeds {max}")]
    DimensionTooLarge {
        method: &'static str,
        sites: usize,
        max: usize,
    },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid flow system: {0}")]
    InvalidFlowSystem(String),

    #[error("numeric couplings required: {0}")]
    NumericCouplingsRequired(String),
}

pub type Result<T> = std::result::Result<T, Error>;
