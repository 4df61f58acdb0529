//! Planar Ising model toolkit: exact enumeration, Kac–Ward matrices and
//! Pfaffians, s-holomorphic spinors, isoradial analysis, s-embeddings,
//! periodic criticality experiments and the FK representation.

pub mod error;
pub mod gen;
pub mod fk;
pub mod geom;
pub mod io;
pub mod isoradial;
pub mod ising_enum;
pub mod kacward;
pub mod periodic;
pub mod pfaffian;
pub mod planar_map;
pub mod sembed;
pub mod sholo;
pub mod svg;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use geom::C64;
pub use planar_map::{
    build_map, dual_pair, ArcKind, BoundaryArc, DiracPhase, DoubleCover, DualPair, EdgeKind, PlanarMap, Quad, Varpi,
};
pub use weights::IsingWeights;
