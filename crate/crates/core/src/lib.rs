//! Numerical approximation and analysis of carrying simplices of
//! three-species competitive maps.

// NaN must fail these checks, hence `!(a > b)` rather than `a <= b`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod simplex;
pub mod spectra;

pub use geometry::{
    make_grid, radial_project, DeltaGrid, GeometryError, Point3, RadialGraph, SimplexPoint, SpeciesSubset, Vec3,
};
pub use linalg::{Matrix2, Matrix3};
pub use models::{HypothesisReport, JacobianMode, LeslieGowerParams, MapModel, ModelError, RickerParams, Verdict};
pub use spectra::{ClassVerdict, ClassificationReport, FixedPointRecord, SpectraError, SpectrumRecord};

/// Derives an independent stream seed from a base seed and a key (splitmix64).
pub fn mix_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
