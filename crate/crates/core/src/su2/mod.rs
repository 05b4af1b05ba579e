//! SU(2)/SO(3) representation theory: Clebsch-Gordan coefficients, Wigner
//! matrices, spherical harmonics and Haar-random rotations.
//!
//! Conventions are global: complex basis, Condon-Shortley phase, ZYZ Euler
//! angles, and component order `m = -j..j` ascending.

pub mod cg;
pub mod harmonics;
pub mod rotation;
pub mod wigner;

pub use cg::{cg_coefficient, cg_tensor, CgTensor};
pub use harmonics::{harmonic_with_jacobian, spherical_harmonics};
pub use rotation::{haar_rotation, haar_rotation_from, Matrix3, Quaternion, Rotation};
pub use wigner::{wigner_d, wigner_small_d, WignerD};
