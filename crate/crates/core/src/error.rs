//! Error types, one enum per subsystem.

use thiserror::Error;

/// Errors raised while building or validating a billiard table.
#[derive(Debug, Error)]
pub enum TableError {
    #[error("scatterers {0} and {1} overlap (surface gap {gap:.6e})", gap = .2)]
    Overlap(usize, usize, f64),
    #[error("certification ray from scatterer {scatterer} (r={r:.6}, phi={phi:.6}) exceeded max flight {max_flight}")]
    InfiniteHorizon {
        scatterer: usize,
        r: f64,
        phi: f64,
        max_flight: f64,
    },
    #[error("family bound violated: {quantity} = {value:.6} outside [{lo:.6}, {hi:.6}]")]
    FamilyBound {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid table data: {0}")]
    Invalid(String),
    #[error("scatterer lists not comparable: {0}")]
    ArityMismatch(String),
}

/// Errors raised by the collision map and its derivatives.
#[derive(Debug, Error)]
pub enum MapError {
    #[error("tangential collision at scatterer {scatterer} (r={r:.6}, phi={phi:.6}): {reason}")]
    Tangency {
        scatterer: usize,
        r: f64,
        phi: f64,
        reason: &'static str,
    },
    #[error("no collision found within flight bound {max_flight} from scatterer {scatterer} (r={r:.6}, phi={phi:.6}); table horizon certificate is suspect")]
    NoCollision {
        scatterer: usize,
        r: f64,
        phi: f64,
        max_flight: f64,
    },
    #[error("observed flight time {flight:.6} outside certified [{lo:.6}, {hi:.6}] (tolerance applied)")]
    FlightBound { flight: f64, lo: f64, hi: f64 },
    #[error("map distance grid too coarse: {0}")]
    GridTooCoarse(String),
}

/// Errors raised by stable-curve machinery.
#[derive(Debug, Error)]
pub enum CurveError {
    #[error("failed to localize a cut in [{lo:.9}, {hi:.9}] within {iters} bisection steps")]
    Resolution { lo: f64, hi: f64, iters: usize },
    #[error("invalid curve: {0}")]
    Invalid(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Errors raised by the cone machinery.
#[derive(Debug, Error)]
pub enum ConeError {
    #[error("function not in test-function cone: certificate {certificate:.6} exceeds a = {a:.6}")]
    NotInCone { certificate: f64, a: f64 },
    #[error("argument outside admissible domain: {0}")]
    Domain(String),
    #[error("curve sampler produced no admissible curves")]
    EmptySampler,
    #[error("cone order distance not defined: {0}")]
    NotComparable(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Errors raised by transfer-operator evaluation.
#[derive(Debug, Error)]
pub enum TransferError {
    #[error("leafwise and pointwise routes disagree: relative difference {rel:.3e} exceeds {tol:.3e}")]
    Tolerance { rel: f64, tol: f64 },
    #[error("pushed test function certificate {certificate:.6} exceeds sigma*a = {bound:.6}")]
    CertificateViolation { certificate: f64, bound: f64 },
    #[error("map sequence not admissible: {0}")]
    NotAdmissible(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

/// Errors raised by open-system experiments.
#[derive(Debug, Error)]
pub enum OpenError {
    #[error("hole geometry invalid: {0}")]
    Geometry(String),
    #[error("starvation: {survivors} survivors at step {n}, need at least {min}")]
    Starvation {
        survivors: usize,
        n: usize,
        min: usize,
    },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Errors raised while constructing boxed scattering tables.
#[derive(Debug, Error)]
pub enum BoxedError {
    #[error("obstacle {0} crosses the box boundary without the required reflection symmetry")]
    Symmetry(usize),
    #[error("unfolded table failed horizon certification: {0}")]
    Horizon(#[from] TableError),
    #[error("invalid box: {0}")]
    Invalid(String),
}

/// Errors raised by the random Lorentz gas.
#[derive(Debug, Error)]
pub enum LorentzError {
    #[error("lorentz config invalid: {0}")]
    Config(String),
    #[error(transparent)]
    Boxed(#[from] BoxedError),
    #[error(transparent)]
    Open(#[from] OpenError),
    #[error("starvation: only {matches} walkers matched the path prefix, need {min}")]
    Starvation { matches: usize, min: usize },
}
