use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("flux position ({x}, {y}) lies exactly on a lattice site or link; move it into a plaquette interior")]
    FluxOnGridLine { x: f64, y: f64 },

    #[error("flux position ({x}, {y}) is outside the interior plaquettes of the box")]
    FluxOutsideBox { x: f64, y: f64 },

    #[error("path leaves the grid at step {step}: site ({i}, {j})")]
    PathOutsideGrid { step: usize, i: i64, j: i64 },

    #[error("path sites {a:?} and {b:?} are not nearest neighbours")]
    NonAdjacentPath { a: (usize, usize), b: (usize, usize) },

    #[error("displacement ({di}, {dj}) exceeds the grid extent")]
    DisplacementTooLarge { di: i64, dj: i64 },

    #[error("solver did not converge at t = {t}: residual {residual:.3e} after {iters} iterations")]
    SolverDiverged { t: f64, residual: f64, iters: usize },

    #[error("probability {probability:.3e} within the boundary band at t = {t} exceeds 1e-6; the box is too small for this run")]
    BoxViolation { t: f64, probability: f64 },

    #[error("dt = {dt} too large for this Hamiltonian: require dt * {bound} < {limit}")]
    DtTooLarge { dt: f64, bound: f64, limit: f64 },

    #[error("grid has {n} sites per side; the dense oracle accepts at most {max}")]
    GridTooLarge { n: usize, max: usize },

    #[error("moving flux in this gauge supports horizontal motion only (got vy = {vy})")]
    UnsupportedMotion { vy: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("schedule invalid: {0}")]
    BadSchedule(String),

    #[error("no plateau found: {0}")]
    NoPlateau(String),

    #[error("fringe amplitude {amplitude:.3e} below floor {floor:.3e}; packets are not overlapped")]
    NoFringe { amplitude: f64, floor: f64 },

    #[error("moment order {n} out of range 1..=8")]
    MomentOrder { n: u32 },

    #[error("modulus must be positive, got {p0}")]
    BadModulus { p0: f64 },

    #[error("state dump corrupt: {0}")]
    BadDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
