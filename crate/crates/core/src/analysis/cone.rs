//! Tangent-cone directions of the surface at a planar fixed point, their
//! decomposition `z = α e_k − β r + γ w` and the sign/ratio diagnostics
//! expected under convexity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{make_grid, Point3, RadialGraph, SimplexPoint, Vec3};
use crate::linalg::Matrix3;
use crate::spectra::{FixedPointRecord, SpectrumRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("fixed point is not planar")]
    NotPlanar,
    #[error("only {found} surface samples within h0 = {h0} of the fixed point, need {needed}")]
    InsufficientSamples { found: usize, needed: usize, h0: f64 },
    #[error("basis (e_k, r, w) is singular (det {0:e})")]
    BasisSingular(f64),
    #[error("decomposition residual {0:e} exceeds 1e-9")]
    Residual(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeOptions {
    /// Coarsest scale; `None` uses `8 · rho_fp / L`.
    pub h0: Option<f64>,
    /// Refinement factor of the sampling grid relative to the surface grid.
    pub refine: usize,
    pub min_samples: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions { h0: None, refine: 4, min_samples: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSample {
    pub scale: f64,
    pub z: Vec3,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub scale: f64,
    pub count: usize,
    pub min_beta: Option<f64>,
    /// Over samples with `alpha > alpha_filter`.
    pub min_beta_over_alpha: Option<f64>,
    /// Over samples with `alpha > alpha_filter`.
    pub min_alpha_over_beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeEstimate {
    pub fp: FixedPointRecord,
    /// `(e_k, r, w)`, unit vectors.
    pub basis: [Vec3; 3],
    /// Scales from coarsest to finest.
    pub scales: Vec<f64>,
    pub samples: Vec<ConeSample>,
    pub stats: Vec<ScaleStats>,
}

pub const ALPHA_FILTER: f64 = 0.05;

/// Coefficients `(α, β, γ)` of `z = α e − β r + γ w`.
pub fn decompose(basis: &[Vec3; 3], z: Vec3) -> Result<[f64; 3], ConeError> {
    let [e, r, w] = basis;
    let m = Matrix3::from_rows(std::array::from_fn(|i| [e[i], -r[i], w[i]]));
    let det = m.det();
    if det.abs() < 1e-10 {
        return Err(ConeError::BasisSingular(det));
    }
    let c = m.solve(z).ok_or(ConeError::BasisSingular(det))?;
    let back = *e * c[0] - *r * c[1] + *w * c[2];
    let res = (back - z).norm();
    if res >= 1e-9 {
        return Err(ConeError::Residual(res));
    }
    Ok([c[0], c[1], c[2]])
}

fn stats_for(scale: f64, samples: &[ConeSample]) -> ScaleStats {
    let in_scale: Vec<&ConeSample> = samples.iter().filter(|s| s.scale == scale).collect();
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    ScaleStats {
        scale,
        count: in_scale.len(),
        min_beta: min(&mut in_scale.iter().map(|s| s.beta)),
        min_beta_over_alpha: min(&mut in_scale.iter().filter(|s| s.alpha > ALPHA_FILTER).map(|s| s.beta / s.alpha)),
        min_alpha_over_beta: min(&mut in_scale
            .iter()
            .filter(|s| s.alpha > ALPHA_FILTER && s.beta != 0.0)
            .map(|s| s.alpha / s.beta)),
    }
}

impl ConeEstimate {
    /// Builds an estimate from explicit sample directions per scale.
    pub fn from_directions(
        fp: FixedPointRecord,
        basis: [Vec3; 3],
        scales: Vec<f64>,
        directions: &[(f64, Vec3)],
    ) -> Result<Self, ConeError> {
        let samples = directions
            .iter()
            .map(|&(scale, z)| {
                let [alpha, beta, gamma] = decompose(&basis, z)?;
                Ok(ConeSample { scale, z, alpha, beta, gamma })
            })
            .collect::<Result<Vec<_>, ConeError>>()?;
        let stats = scales.iter().map(|&h| stats_for(h, &samples)).collect();
        Ok(ConeEstimate { fp, basis, scales, samples, stats })
    }

    /// Rebuilds the statistics after editing samples.
    pub fn refresh_stats(&mut self) {
        self.stats = self.scales.iter().map(|&h| stats_for(h, &self.samples)).collect();
    }

    /// CSV "scale,z1,z2,z3,alpha,beta,gamma".
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,z1,z2,z3,alpha,beta,gamma\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", s.scale, s.z[0], s.z[1], s.z[2], s.alpha, s.beta, s.gamma));
        }
        out
    }
}

/// Samples the polyhedral surface on a refined grid near `spec.fp` and
/// decomposes the secant directions in annuli `(h/4, h]` for
/// `h ∈ {h0, h0/2, h0/4}`.
pub fn estimate_tangent_cone(
    surface: &RadialGraph,
    spec: &SpectrumRecord,
    opts: &ConeOptions,
) -> Result<ConeEstimate, ConeError> {
    let fp = &spec.fp;
    let k = fp.face.complement().filter(|c| c.len() == 1).ok_or(ConeError::NotPlanar)?;
    let k = k.members().next().expect("one species");
    let w = spec.other_vector.ok_or(ConeError::NotPlanar)?;
    let basis = [Vec3::basis(k), spec.principal_vector, w];
    let x0 = fp.location;
    let h0 = opts.h0.unwrap_or(8.0 * x0.l1() / surface.grid.level as f64);
    let scales = vec![h0, h0 / 2.0, h0 / 4.0];
    let fine = make_grid((surface.grid.level * opts.refine.max(1)).min(1024)).expect("level within range");
    let mut points: Vec<Point3> = surface.points();
    points.extend(fine.nodes.iter().map(|y: &SimplexPoint| y.scaled(surface.facet_radius_at(y))));
    let mut directions = Vec::new();
    let mut within = 0;
    for p in points {
        let d = p - x0;
        let dist = d.norm();
        if dist <= 1e-12 || dist > h0 {
            continue;
        }
        within += 1;
        for &h in &scales {
            if dist > h / 4.0 && dist <= h {
                directions.push((h, d * (1.0 / dist)));
            }
        }
    }
    if within < opts.min_samples {
        return Err(ConeError::InsufficientSamples { found: within, needed: opts.min_samples, h0 });
    }
    ConeEstimate::from_directions(fp.clone(), basis, scales, &directions)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaOptions {
    pub eps_cone: f64,
    pub c_low: f64,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        LemmaOptions { eps_cone: 1e-2, c_low: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LemmaVerdict {
    Consistent,
    Violated,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLemmas {
    pub scale: f64,
    /// `min β ≥ −eps_cone`.
    pub l1: LemmaVerdict,
    /// `min β/α > c_low` over samples with `α > 0.05`.
    pub l2: LemmaVerdict,
    /// `min α/β > c_low` over samples with `α > 0.05`.
    pub l3: LemmaVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub per_scale: Vec<ScaleLemmas>,
    /// Per lemma, whether all scales agree.
    pub stable: [bool; 3],
}

impl LemmaReport {
    /// All three lemmas Consistent at the `n` finest scales.
    pub fn consistent_at_finest(&self, n: usize) -> bool {
        let k = self.per_scale.len();
        k >= n
            && self.per_scale[k - n..].iter().all(|s| [s.l1, s.l2, s.l3].iter().all(|v| *v == LemmaVerdict::Consistent))
    }
}

fn bound(v: Option<f64>, floor: f64) -> LemmaVerdict {
    match v {
        None => LemmaVerdict::InsufficientData,
        Some(v) if v > floor => LemmaVerdict::Consistent,
        Some(_) => LemmaVerdict::Violated,
    }
}

pub fn lemma_diagnostics(cone: &ConeEstimate, opts: &LemmaOptions) -> LemmaReport {
    let per_scale: Vec<ScaleLemmas> = cone
        .stats
        .iter()
        .map(|s| ScaleLemmas {
            scale: s.scale,
            l1: match s.min_beta {
                None => LemmaVerdict::InsufficientData,
                Some(b) if b >= -opts.eps_cone => LemmaVerdict::Consistent,
                Some(_) => LemmaVerdict::Violated,
            },
            l2: bound(s.min_beta_over_alpha, opts.c_low),
            l3: bound(s.min_alpha_over_beta, opts.c_low),
        })
        .collect();
    let agree = |f: fn(&ScaleLemmas) -> LemmaVerdict| per_scale.windows(2).all(|w| f(&w[0]) == f(&w[1]));
    let stable = [agree(|s| s.l1), agree(|s| s.l2), agree(|s| s.l3)];
    LemmaReport { per_scale, stable }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TangencyVerdict {
    NotTangent,
    Tangent,
    Inconclusive,
}

/// `NotTangent` if some sample leaves the face (`α > 0.05`); `Tangent` if
/// every sample at the finest scale has `α < 1e-3`.
pub fn non_tangency_check(cone: &ConeEstimate) -> TangencyVerdict {
    if cone.samples.iter().any(|s| s.alpha > ALPHA_FILTER) {
        return TangencyVerdict::NotTangent;
    }
    let finest = cone.scales.iter().copied().fold(f64::INFINITY, f64::min);
    let mut fine = cone.samples.iter().filter(|s| s.scale == finest).peekable();
    if fine.peek().is_some() && fine.all(|s| s.alpha < 1e-3) {
        TangencyVerdict::Tangent
    } else {
        TangencyVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpeciesSubset;
    use crate::models::fixtures::*;
    use crate::simplex::{compute_surface_at_level, IterationOptions};
    use crate::spectra::{boundary_spectrum, find_planar_fixed_points};

    fn lg_b_spectrum() -> SpectrumRecord {
        let face = SpeciesSubset::from_species(&[1, 2]).unwrap();
        let fp = find_planar_fixed_points(&lg_b(), face).unwrap().points.remove(0);
        boundary_spectrum(&fp).unwrap()
    }

    #[test]
    fn lg_b_cone() {
        let s = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
        let spec = lg_b_spectrum();
        let cone = estimate_tangent_cone(&s.surface, &spec, &ConeOptions::default()).unwrap();
        assert_eq!(cone.stats.len(), 3);
        for st in &cone.stats {
            assert!(st.count > 0);
            assert!(st.min_beta.unwrap() >= -1e-2, "{st:?}");
        }
        for smp in &cone.samples {
            assert!((0.0..=1.0).contains(&smp.alpha));
            let back = cone.basis[0] * smp.alpha - cone.basis[1] * smp.beta + cone.basis[2] * smp.gamma;
            assert!((back - smp.z).norm() < 1e-9);
        }
        let lem = lemma_diagnostics(&cone, &LemmaOptions::default());
        assert!(lem.consistent_at_finest(3), "{lem:?}");
        assert_eq!(non_tangency_check(&cone), TangencyVerdict::NotTangent);
    }

    #[test]
    fn flat_cone_has_constant_ratio() {
        // LG-A surface is the plane Σx = 1; at (1/2, 1/2, 0) with r = (1,1)/√2 and
        // w = (1,−1)/√2, a plane direction z = α e3 − β r + γ w has α = √2 β.
        let s = compute_surface_at_level(&lg_a(), 32, IterationOptions::default()).unwrap();
        let fp = FixedPointRecord {
            location: Point3::new(0.5, 0.5, 0.0),
            face: SpeciesSubset::from_species(&[1, 2]).unwrap(),
            residual: 0.0,
            jacobian: Matrix3::IDENTITY,
        };
        let r = Vec3::new(1.0, 1.0, 0.0) * (1.0 / 2f64.sqrt());
        let w = Vec3::new(1.0, -1.0, 0.0) * (1.0 / 2f64.sqrt());
        let basis = [Vec3::basis(2), r, w];
        let spec = SpectrumRecord {
            fp,
            principal: 0.5,
            internal_other: Some(1.0),
            externals: vec![(3, 1.0)],
            principal_vector: r,
            other_vector: Some(w),
            flags: vec![],
        };
        let cone = estimate_tangent_cone(&s.surface, &spec, &ConeOptions::default()).unwrap();
        assert_eq!(cone.basis, basis);
        for smp in cone.samples.iter().filter(|s| s.alpha > ALPHA_FILTER) {
            assert!((smp.beta / smp.alpha - 1.0 / 2f64.sqrt()).abs() < 1e-2, "{smp:?}");
        }
    }

    fn synthetic(directions: &[Vec3]) -> ConeEstimate {
        let spec = lg_b_spectrum();
        let basis = [Vec3::basis(2), spec.principal_vector, spec.other_vector.unwrap()];
        let dirs: Vec<(f64, Vec3)> = directions.iter().map(|&z| (0.1, z)).collect();
        ConeEstimate::from_directions(spec.fp, basis, vec![0.1], &dirs).unwrap()
    }

    #[test]
    fn face_only_samples() {
        let spec = lg_b_spectrum();
        let w = spec.other_vector.unwrap();
        let cone = synthetic(&[w, w * -1.0]);
        for s in &cone.samples {
            assert!((s.gamma.abs() - 1.0).abs() < 1e-12 && s.beta.abs() < 1e-12 && s.alpha.abs() < 1e-12);
        }
        assert_eq!(non_tangency_check(&cone), TangencyVerdict::Tangent);
        let lem = lemma_diagnostics(&cone, &LemmaOptions::default());
        assert_eq!(lem.per_scale[0].l2, LemmaVerdict::InsufficientData);
        assert_eq!(lem.per_scale[0].l3, LemmaVerdict::InsufficientData);
    }

    #[test]
    fn one_leaving_sample_makes_it_transversal() {
        let spec = lg_b_spectrum();
        let w = spec.other_vector.unwrap();
        let r = spec.principal_vector;
        let z = (Vec3::basis(2) * 0.5 - r * 0.5 + w * 0.1).normalized().unwrap();
        let cone = synthetic(&[w, z]);
        assert_eq!(non_tangency_check(&cone), TangencyVerdict::NotTangent);
    }

    #[test]
    fn reflected_samples_violate_l1() {
        let s = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
        let mut cone = estimate_tangent_cone(&s.surface, &lg_b_spectrum(), &ConeOptions::default()).unwrap();
        for smp in cone.samples.iter_mut() {
            smp.beta = -smp.beta;
        }
        cone.refresh_stats();
        let lem = lemma_diagnostics(&cone, &LemmaOptions::default());
        assert!(lem.per_scale.iter().all(|s| s.l1 == LemmaVerdict::Violated));
    }

    #[test]
    fn too_few_samples() {
        let s = compute_surface_at_level(&lg_b(), 8, IterationOptions::default()).unwrap();
        let opts = ConeOptions { h0: Some(1e-3), ..Default::default() };
        let err = estimate_tangent_cone(&s.surface, &lg_b_spectrum(), &opts).unwrap_err();
        assert!(matches!(err, ConeError::InsufficientSamples { .. }));
    }

    #[test]
    fn axial_point_is_rejected() {
        let fps = crate::spectra::find_axial_fixed_points(&lg_b()).unwrap();
        let spec = boundary_spectrum(&fps[0]).unwrap();
        let s = compute_surface_at_level(&lg_b(), 8, IterationOptions::default()).unwrap();
        assert_eq!(
            estimate_tangent_cone(&s.surface, &spec, &ConeOptions::default()).unwrap_err(),
            ConeError::NotPlanar
        );
    }
}
