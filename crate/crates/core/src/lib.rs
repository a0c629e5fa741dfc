//! Numerical laboratory for sequential dispersing billiards.
//!
//! The crate implements the collision map for tables of disjoint circular
//! scatterers on a flat torus, the stable-curve machinery that underlies
//! leafwise analysis, Birkhoff cones of test functions with their Hilbert
//! projective metrics, transfer-operator diagnostics, open systems with
//! holes and escape rates, and two end-to-end models: boxed chaotic
//! scattering with lazy gates and a random Lorentz gas on a lattice of
//! cells with quenched disorder.
//!
//! All dynamical objects are immutable after construction and all
//! operations are pure functions, so everything here is safe to drive from
//! any number of worker threads.

pub mod cone;
pub mod curves;
pub mod diag;
pub mod error;
pub mod geom;
pub mod lorentz;
pub mod map;
pub mod open;
pub mod scatter;
pub mod stats;
pub mod table;
pub mod transfer;

pub use error::{
    BoxedError, ConeError, CurveError, LorentzError, MapError, OpenError, TableError,
    TransferError,
};
pub use geom::{Torus, Vec2};
pub use map::{Homogeneity, PhasePoint};
pub use table::{BilliardTable, FamilyParams, Scatterer};
