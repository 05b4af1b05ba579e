//! Equivariant fusion blocks for SU(2)/SO(3) built from fusion diagrams.

pub mod autodiff;
pub mod block;
pub mod diagram;
pub mod error;
pub mod harness;
pub mod irrep;
pub mod layers;
pub mod spin;
pub mod su2;

pub use error::{Error, Result};
pub use irrep::{Activation, IrrepVector};
pub use spin::{admissible, MagneticIndex, Spin};
pub use diagram::{enumerate_internal, FusionDiagram, FusionTree, Leaf, TreeShape, Violation};
