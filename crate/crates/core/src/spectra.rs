//! Boundary fixed points, their principal/internal/external eigenvalues and
//! the smoothness criterion built from them.
//!
//! At an axial fixed point `u_i` the Jacobian has structural zeros off the
//! diagonal in every row `j ≠ i`; the principal eigenvalue is `DP(u_i)_ii`
//! and the externals are the remaining diagonal entries. At a planar fixed
//! point on face `{i, j}` the `2×2` block carries two real positive internal
//! eigenvalues, the smaller of which is principal, and the remaining diagonal
//! entry is external. The carrying simplex is predicted to be a neatly
//! embedded `C¹` manifold iff, at every boundary fixed point, the principal
//! eigenvalue is smaller than every external one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, SpeciesSubset, Vec3};
use crate::linalg::Matrix3;
use crate::models::{axis_brackets, axis_root, MapModel, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("axis {axis}: {count} sign changes of P_i(s e_i) - s, expected exactly one")]
    MultipleRoots { axis: usize, count: usize },
    #[error("complex internal eigenvalues at {at:?} (discriminant {disc:e})")]
    ComplexInternalEigenvalues { at: [f64; 3], disc: f64 },
    #[error("non-positive eigenvalue {value} ({which}) at {at:?}")]
    NonpositiveEigenvalue { at: [f64; 3], which: String, value: f64 },
    #[error("Jacobian structure violated at {at:?}: {detail}")]
    StructureViolation { at: [f64; 3], detail: String },
    #[error("fixed point residual {0:e} exceeds 1e-10")]
    Residual(f64),
    #[error("consistency check failed at {at:?}: {detail}")]
    CrossCheck { at: [f64; 3], detail: String },
    #[error("interior fixed points have no boundary spectrum")]
    InteriorPoint,
}

/// A fixed point with the face whose relative interior contains it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub location: Point3,
    pub face: SpeciesSubset,
    /// `‖P(x) − x‖`.
    pub residual: f64,
    pub jacobian: Matrix3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumFlag {
    Degenerate,
    MarginalCriterion,
    PerronVectorNotPositive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub fp: FixedPointRecord,
    pub principal: f64,
    /// The larger internal eigenvalue (planar points only).
    pub internal_other: Option<f64>,
    /// `(species label, eigenvalue)` with 1-based labels.
    pub externals: Vec<(usize, f64)>,
    /// Unit eigenvector of the principal eigenvalue, positive on the face.
    pub principal_vector: Vec3,
    /// Unit eigenvector of the other internal eigenvalue (planar points only).
    pub other_vector: Option<Vec3>,
    pub flags: Vec<SpectrumFlag>,
}

impl SpectrumRecord {
    /// `min_j (external_j − principal)`.
    pub fn margin(&self) -> f64 {
        self.externals.iter().map(|(_, e)| e - self.principal).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassVerdict {
    NeatlyEmbeddedPredicted,
    CriterionFails,
    Marginal,
    Degenerate,
}

impl ClassVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassVerdict::NeatlyEmbeddedPredicted => "NeatlyEmbeddedPredicted",
            ClassVerdict::CriterionFails => "CriterionFails",
            ClassVerdict::Marginal => "Marginal",
            ClassVerdict::Degenerate => "Degenerate",
        }
    }
}

/// Per-point entry of the classification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub location: Point3,
    pub face: SpeciesSubset,
    pub principal: f64,
    pub internal_other: Option<f64>,
    pub externals: Vec<(usize, f64)>,
    /// `external − principal` per external species, in the order of `externals`.
    pub margins: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub notes: Vec<String>,
    pub spectra: Vec<SpectrumRecord>,
    pub points: Vec<PointSummary>,
    /// Faces whose planar fixed points form a continuum.
    pub continuum_faces: Vec<SpeciesSubset>,
    /// Minimum over all boundary fixed points of `external − principal`.
    pub min_margin: f64,
    pub margin_tol: f64,
    pub verdict: ClassVerdict,
}

const RESIDUAL_MAX: f64 = 1e-10;
const DEDUP_DIST: f64 = 1e-7;
/// A face with at least this many distinct converged planar points carries
/// a continuum of fixed points.
pub const CONTINUUM_COUNT: usize = 10;

fn record(model: &MapModel, mut x: Point3, face: SpeciesSubset) -> Result<FixedPointRecord, SpectraError> {
    if let Some(outside) = face.complement() {
        for j in outside.members() {
            x[j] = 0.0;
        }
    }
    let residual = (model.eval(x)? - x).norm();
    let jacobian = model.jacobian(x)?;
    Ok(FixedPointRecord { location: x, face, residual, jacobian })
}

/// The three axial fixed points `u_1, u_2, u_3`.
pub fn find_axial_fixed_points(model: &MapModel) -> Result<Vec<FixedPointRecord>, SpectraError> {
    (0..3)
        .map(|i| {
            let brackets = axis_brackets(model, i, 1e-8)?;
            match brackets.len() {
                0 => Err(ModelError::NoAxialFixedPoint { axis: i + 1 }.into()),
                1 => {
                    let s = axis_root(model, i, brackets[0])?;
                    let mut x = Point3::ORIGIN;
                    x[i] = s;
                    let rec = record(model, x, SpeciesSubset::single(i))?;
                    if rec.residual >= 1e-12 * (1.0 + s) {
                        return Err(SpectraError::Residual(rec.residual));
                    }
                    Ok(rec)
                }
                count => Err(SpectraError::MultipleRoots { axis: i + 1, count }),
            }
        })
        .collect()
}

/// Newton iteration for `P(x) = x` restricted to face `I`, with a
/// Levenberg–Marquardt regularisation so that non-isolated fixed points are
/// still reached. Returns `None` if the iteration does not settle.
fn newton_on_face(model: &MapModel, face: SpeciesSubset, start: Point3) -> Option<Point3> {
    let members: Vec<usize> = face.members().collect();
    let mut x = start;
    for _ in 0..100 {
        let fx = model.eval(x).ok()?;
        let f = fx - x;
        let fnorm = f.norm();
        if !fnorm.is_finite() {
            return None;
        }
        if fnorm < 1e-14 {
            return Some(x);
        }
        let j = model.jacobian_unchecked(x).ok()?;
        // Restricted Jacobian of F = P − id, padded with the identity.
        let mut jf = Matrix3::IDENTITY;
        for &r in &members {
            for &c in &members {
                jf.0[r][c] = j.get(r, c) - if r == c { 1.0 } else { 0.0 };
            }
        }
        let mut rhs = Vec3::ZERO;
        for &r in &members {
            rhs[r] = -f[r];
        }
        let jt = jf.transpose();
        let mut normal = jt.mul(&jf);
        let mu = 1e-10 * (1.0 + normal.trace());
        for &r in &members {
            normal.0[r][r] += mu;
        }
        let step = normal.solve(jt.mul_vec(rhs))?;
        let next = x + step;
        if !next.is_finite() || next.0.iter().any(|&v| v < -1.0) {
            return None;
        }
        x = next;
        if step.norm() < 1e-16 * (1.0 + x.to_vec().norm()) {
            break;
        }
    }
    let r = (model.eval(x).ok()? - x).norm();
    (r < 1e-11).then_some(x)
}

fn dedup_sorted(mut pts: Vec<Point3>) -> Vec<Point3> {
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<Point3> = Vec::new();
    for p in pts {
        if out.iter().all(|q| q.dist(&p) >= DEDUP_DIST) {
            out.push(p);
        }
    }
    out
}

/// Result of the planar fixed-point search on one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarSearch {
    pub face: SpeciesSubset,
    /// Distinct fixed points in the open face, lexicographically sorted.
    pub points: Vec<FixedPointRecord>,
    /// Seeds whose Newton iteration failed.
    pub newton_failures: usize,
}

impl PlanarSearch {
    pub fn is_continuum(&self) -> bool {
        self.points.len() >= CONTINUUM_COUNT
    }
}

/// Planar fixed points in the open face `Ḣ_I⁺` from an 8×8 seed grid.
pub fn find_planar_fixed_points(model: &MapModel, face: SpeciesSubset) -> Result<PlanarSearch, SpectraError> {
    let (a, b) = face.pair().ok_or_else(|| SpectraError::StructureViolation {
        at: [0.0; 3],
        detail: format!("face {face} is not planar"),
    })?;
    let m = model.absorbing_box()?;
    let seeds: Vec<Point3> = (0..8)
        .flat_map(|k| {
            (0..8).map(move |l| {
                let mut x = Point3::ORIGIN;
                x[a] = (k as f64 + 0.5) / 8.0 * m[a];
                x[b] = (l as f64 + 0.5) / 8.0 * m[b];
                x
            })
        })
        .collect();
    let solved: Vec<Option<Point3>> = seeds.par_iter().map(|&s| newton_on_face(model, face, s)).collect();
    let newton_failures = solved.iter().filter(|s| s.is_none()).count();
    let inside: Vec<Point3> = solved.into_iter().flatten().filter(|x| x[a] > DEDUP_DIST && x[b] > DEDUP_DIST).collect();
    let points = dedup_sorted(inside).into_iter().map(|x| record(model, x, face)).collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = points.iter().find(|p| p.residual >= RESIDUAL_MAX) {
        return Err(SpectraError::Residual(bad.residual));
    }
    Ok(PlanarSearch { face, points, newton_failures })
}

/// Interior fixed points from a 5×5×5 seed grid. Only used for spot checks.
pub fn find_interior_fixed_points(model: &MapModel) -> Result<Vec<FixedPointRecord>, SpectraError> {
    let m = model.absorbing_box()?;
    let seeds: Vec<Point3> = (0..125)
        .map(|n| {
            let idx = [n / 25, (n / 5) % 5, n % 5];
            Point3(std::array::from_fn(|i| (idx[i] as f64 + 0.5) / 5.0 * m[i]))
        })
        .collect();
    let solved: Vec<Point3> = seeds
        .par_iter()
        .filter_map(|&s| newton_on_face(model, SpeciesSubset::FULL, s))
        .filter(|x| x.0.iter().all(|&v| v > DEDUP_DIST))
        .collect();
    dedup_sorted(solved).into_iter().map(|x| record(model, x, SpeciesSubset::FULL)).collect()
}

fn embed(face: (usize, usize), v: [f64; 2]) -> Vec3 {
    let mut out = Vec3::ZERO;
    out[face.0] = v[0];
    out[face.1] = v[1];
    out
}

/// Principal, internal and external eigenvalues at a boundary fixed point.
pub fn boundary_spectrum(fp: &FixedPointRecord) -> Result<SpectrumRecord, SpectraError> {
    let j = &fp.jacobian;
    let at = fp.location.0;
    let outside = fp.face.complement().ok_or(SpectraError::InteriorPoint)?;
    // Rows of absent species vanish off the diagonal.
    for r in outside.members() {
        for c in (0..3).filter(|&c| c != r) {
            if j.get(r, c).abs() >= 1e-8 {
                return Err(SpectraError::StructureViolation {
                    at,
                    detail: format!("DP_{}{} = {:e} should vanish", r + 1, c + 1, j.get(r, c)),
                });
            }
        }
    }
    let externals: Vec<(usize, f64)> = outside.members().map(|r| (r + 1, j.get(r, r))).collect();
    for &(s, e) in &externals {
        if !(e > 0.0) {
            return Err(SpectraError::NonpositiveEigenvalue { at, which: format!("external, species {s}"), value: e });
        }
    }
    let mut flags = Vec::new();
    let inv = j.inverse(0.0).ok_or(ModelError::SingularJacobian { at, det: j.det() })?;
    match fp.face.len() {
        1 => {
            let i = fp.face.members().next().expect("nonempty");
            let principal = j.get(i, i);
            if !(principal > 0.0) {
                return Err(SpectraError::NonpositiveEigenvalue { at, which: "principal".into(), value: principal });
            }
            // The 1×1 block of DP⁻¹ is the reciprocal of the principal eigenvalue.
            let perron = inv.get(i, i);
            if (principal * perron - 1.0).abs() >= 1e-9 {
                return Err(SpectraError::CrossCheck {
                    at,
                    detail: format!("principal {principal} vs inverse block {perron}"),
                });
            }
            if principal >= 1.0 {
                flags.push(SpectrumFlag::Degenerate);
            }
            Ok(SpectrumRecord {
                fp: fp.clone(),
                principal,
                internal_other: None,
                externals,
                principal_vector: Vec3::basis(i),
                other_vector: None,
                flags,
            })
        }
        2 => {
            let pair = fp.face.pair().expect("planar face");
            let block = j.block2(pair.0, pair.1);
            let eig =
                block.eigen().ok_or(SpectraError::ComplexInternalEigenvalues { at, disc: block.discriminant() })?;
            let (principal, mut r) = eig.small;
            let (other, w) = eig.large;
            for (name, v) in [("principal", principal), ("other internal", other)] {
                if !(v > 0.0) {
                    return Err(SpectraError::NonpositiveEigenvalue { at, which: name.into(), value: v });
                }
            }
            for (mu, v) in [(principal, r), (other, w)] {
                let jv = block.mul_vec(v);
                let res = (jv[0] - mu * v[0]).hypot(jv[1] - mu * v[1]);
                if res >= 1e-9 {
                    return Err(SpectraError::CrossCheck { at, detail: format!("eigen residual {res:e} for {mu}") });
                }
            }
            let inv_block = inv.block2(pair.0, pair.1);
            let perron = inv_block
                .eigen()
                .map(|e| e.large.0)
                .ok_or_else(|| SpectraError::CrossCheck { at, detail: "inverse block has complex spectrum".into() })?;
            if (principal * perron - 1.0).abs() >= 1e-9 {
                return Err(SpectraError::CrossCheck {
                    at,
                    detail: format!("principal {principal} vs Perron root of inverse block {perron}"),
                });
            }
            if r[0] + r[1] < 0.0 {
                r = [-r[0], -r[1]];
            }
            if !(r[0] > 0.0 && r[1] > 0.0) {
                flags.push(SpectrumFlag::PerronVectorNotPositive);
            }
            if principal >= 1.0 {
                flags.push(SpectrumFlag::Degenerate);
            }
            Ok(SpectrumRecord {
                fp: fp.clone(),
                principal,
                internal_other: Some(other),
                externals,
                principal_vector: embed(pair, r),
                other_vector: Some(embed(pair, w)),
                flags,
            })
        }
        _ => Err(SpectraError::InteriorPoint),
    }
}

/// Default tolerance separating a satisfied criterion from a marginal one.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-6;

/// Gathers spectra at all axial and planar fixed points and evaluates the
/// eigenvalue criterion.
pub fn classify(model: &MapModel, margin_tol: f64) -> Result<ClassificationReport, SpectraError> {
    let mut notes =
        vec!["boundary periodic points of period >= 2 are not searched; only fixed points enter the criterion"
            .to_string()];
    let mut spectra = Vec::new();
    for fp in find_axial_fixed_points(model)? {
        spectra.push(boundary_spectrum(&fp)?);
    }
    let mut continuum_faces = Vec::new();
    for face in SpeciesSubset::PLANAR {
        let search = find_planar_fixed_points(model, face)?;
        if search.is_continuum() {
            notes.push(format!(
                "face {face}: {} distinct planar fixed points, treated as a continuum",
                search.points.len()
            ));
            continuum_faces.push(face);
            continue;
        }
        for fp in &search.points {
            spectra.push(boundary_spectrum(fp)?);
        }
    }
    let mut points = Vec::with_capacity(spectra.len());
    let mut min_margin = f64::INFINITY;
    let mut any_marginal = false;
    let mut any_fail = false;
    let mut any_degenerate = !continuum_faces.is_empty();
    for s in spectra.iter_mut() {
        let margins: Vec<f64> = s.externals.iter().map(|(_, e)| e - s.principal).collect();
        for &m in &margins {
            min_margin = min_margin.min(m);
            if m.abs() <= margin_tol {
                any_marginal = true;
                if !s.flags.contains(&SpectrumFlag::MarginalCriterion) {
                    s.flags.push(SpectrumFlag::MarginalCriterion);
                }
            } else if m < 0.0 {
                any_fail = true;
            }
        }
        if s.flags.contains(&SpectrumFlag::Degenerate) {
            any_degenerate = true;
        }
        points.push(PointSummary {
            location: s.fp.location,
            face: s.fp.face,
            principal: s.principal,
            internal_other: s.internal_other,
            externals: s.externals.clone(),
            margins,
        });
    }
    let verdict = if any_degenerate {
        ClassVerdict::Degenerate
    } else if any_marginal {
        ClassVerdict::Marginal
    } else if any_fail {
        ClassVerdict::CriterionFails
    } else {
        ClassVerdict::NeatlyEmbeddedPredicted
    };
    Ok(ClassificationReport { notes, spectra, points, continuum_faces, min_margin, margin_tol, verdict })
}
