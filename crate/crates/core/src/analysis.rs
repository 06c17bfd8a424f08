//! Convexity of the global attractor, tangent cones at planar fixed points
//! and the exponential-separation orbit diagnostic.

pub mod cone;
pub mod convexity;
pub mod separation;

pub use cone::{
    estimate_tangent_cone, lemma_diagnostics, non_tangency_check, ConeError, ConeEstimate, ConeOptions, ConeSample,
    LemmaOptions, LemmaReport, LemmaVerdict, ScaleLemmas, ScaleStats, TangencyVerdict,
};
pub use convexity::{
    convexity_hull_test, convexity_midpoint_test, ConvexityError, ConvexityMethod, ConvexityOptions, ConvexityReport,
    ConvexityVerdict,
};
pub use separation::{exp_separation_diagnostic, SeparationError, SeparationFit, SeparationMeasure, SeparationOptions};
