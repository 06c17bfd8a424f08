//! Competitive maps of the octant and sampled checks of the standing
//! hypotheses on them.
//!
//! Two model families are built in:
//!
//! * Leslie–Gower: `P_i(x) = λ_i x_i / (1 + (A x)_i)`
//! * Ricker: `P_i(x) = x_i exp(r_i (1 − (A x)_i))`
//!
//! Anything else is an [`ExternalMap`], supplied by the caller.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, SpeciesSubset};
use crate::linalg::Matrix3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite value evaluating the map at {0:?}")]
    NumericOverflow([f64; 3]),
    #[error("Jacobian is singular at {at:?} (det = {det:e})")]
    SingularJacobian { at: [f64; 3], det: f64 },
    #[error("model has no absorbing box; external models must declare one")]
    UnsupportedModel,
    #[error("no fixed point found on axis {axis}")]
    NoAxialFixedPoint { axis: usize },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("external model failed: {0}")]
    External(String),
}

/// Parameters of `P_i(x) = λ_i x_i / (1 + (A x)_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeslieGowerParams {
    pub lambda: [f64; 3],
    pub a: [[f64; 3]; 3],
}

impl LeslieGowerParams {
    /// Validated constructor: every `λ_i > 1` and every `a_ij > 0`.
    pub fn new(lambda: [f64; 3], a: [[f64; 3]; 3]) -> Result<Self, ModelError> {
        if let Some(l) = lambda.iter().find(|l| !(l.is_finite() && **l > 1.0)) {
            return Err(ModelError::InvalidParameters(format!("lambda must exceed 1, got {l}")));
        }
        check_positive_matrix(&a)?;
        Ok(LeslieGowerParams { lambda, a })
    }

    /// Symmetric parameters: `λ_i = lambda`, `a_ii = diag`, `a_ij = off`.
    pub fn symmetric(lambda: f64, diag: f64, off: f64) -> Result<Self, ModelError> {
        let mut a = [[off; 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = diag;
        }
        Self::new([lambda; 3], a)
    }
}

/// Parameters of `P_i(x) = x_i exp(r_i (1 − (A x)_i))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RickerParams {
    pub r: [f64; 3],
    pub a: [[f64; 3]; 3],
}

impl RickerParams {
    /// Validated constructor: every `r_i ∈ (0, 1)` and every `a_ij > 0`.
    pub fn new(r: [f64; 3], a: [[f64; 3]; 3]) -> Result<Self, ModelError> {
        if let Some(v) = r.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(ModelError::InvalidParameters(format!("r must lie in (0, 1), got {v}")));
        }
        check_positive_matrix(&a)?;
        Ok(RickerParams { r, a })
    }
}

fn check_positive_matrix(a: &[[f64; 3]; 3]) -> Result<(), ModelError> {
    match a.iter().flatten().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(ModelError::InvalidParameters(format!("competition coefficients must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// A user-supplied map of the octant.
pub trait ExternalMap: Send + Sync {
    fn eval(&self, x: Point3) -> Result<Point3, ModelError>;

    /// Closed-form Jacobian, when the model provides one.
    fn jacobian(&self, _x: Point3) -> Option<Result<Matrix3, ModelError>> {
        None
    }

    fn name(&self) -> String {
        "external".to_string()
    }
}

struct FnMap<F> {
    name: String,
    f: F,
}

impl<F> ExternalMap for FnMap<F>
where
    F: Fn(Point3) -> Point3 + Send + Sync,
{
    fn eval(&self, x: Point3) -> Result<Point3, ModelError> {
        Ok((self.f)(x))
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[derive(Clone)]
pub struct ExternalModel {
    pub map: Arc<dyn ExternalMap>,
    pub absorbing_box: Option<Point3>,
}

impl fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalModel")
            .field("name", &self.map.name())
            .field("absorbing_box", &self.absorbing_box)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind {
    LeslieGower(LeslieGowerParams),
    Ricker(RickerParams),
    External(ExternalModel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Analytic,
    /// Central differences with step `h · (1 + |x_i|)` in coordinate `i`.
    FiniteDifference {
        h: f64,
    },
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Determinants below this magnitude are reported as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MapModel {
    pub kind: ModelKind,
    pub jacobian_mode: JacobianMode,
}

impl MapModel {
    pub fn leslie_gower(params: LeslieGowerParams) -> Self {
        MapModel { kind: ModelKind::LeslieGower(params), jacobian_mode: JacobianMode::Analytic }
    }

    pub fn ricker(params: RickerParams) -> Self {
        MapModel { kind: ModelKind::Ricker(params), jacobian_mode: JacobianMode::Analytic }
    }

    /// External model from a plain function; Jacobians by finite differences.
    pub fn from_fn<F>(name: &str, absorbing_box: Option<Point3>, f: F) -> Self
    where
        F: Fn(Point3) -> Point3 + Send + Sync + 'static,
    {
        Self::external(Arc::new(FnMap { name: name.to_string(), f }), absorbing_box)
    }

    pub fn external(map: Arc<dyn ExternalMap>, absorbing_box: Option<Point3>) -> Self {
        MapModel {
            kind: ModelKind::External(ExternalModel { map, absorbing_box }),
            jacobian_mode: JacobianMode::FiniteDifference { h: DEFAULT_FD_STEP },
        }
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    /// Short stable description of the model and its parameters.
    pub fn fingerprint(&self) -> String {
        match &self.kind {
            ModelKind::LeslieGower(p) => format!("leslie_gower lambda={:?} a={:?}", p.lambda, p.a),
            ModelKind::Ricker(p) => format!("ricker r={:?} a={:?}", p.r, p.a),
            ModelKind::External(e) => format!("external {}", e.map.name()),
        }
    }

    /// Image `P(x)`.
    pub fn eval(&self, x: Point3) -> Result<Point3, ModelError> {
        let y = match &self.kind {
            ModelKind::LeslieGower(p) => {
                let ax = mat_vec(&p.a, x);
                Point3(std::array::from_fn(|i| p.lambda[i] * x[i] / (1.0 + ax[i])))
            }
            ModelKind::Ricker(p) => {
                let ax = mat_vec(&p.a, x);
                Point3(std::array::from_fn(|i| x[i] * (p.r[i] * (1.0 - ax[i])).exp()))
            }
            ModelKind::External(e) => e.map.eval(x)?,
        };
        if !y.is_finite() {
            return Err(ModelError::NumericOverflow(x.0));
        }
        Ok(y)
    }

    /// Jacobian `DP(x)`, rejecting singular matrices.
    pub fn jacobian(&self, x: Point3) -> Result<Matrix3, ModelError> {
        let j = self.jacobian_unchecked(x)?;
        let det = j.det();
        if !det.is_finite() || det.abs() < SINGULAR_DET {
            return Err(ModelError::SingularJacobian { at: x.0, det });
        }
        Ok(j)
    }

    /// Jacobian without the singularity check.
    pub fn jacobian_unchecked(&self, x: Point3) -> Result<Matrix3, ModelError> {
        let j = match (self.jacobian_mode, &self.kind) {
            (JacobianMode::FiniteDifference { h }, _) => self.fd_jacobian(x, h)?,
            (JacobianMode::Analytic, ModelKind::LeslieGower(p)) => {
                let ax = mat_vec(&p.a, x);
                Matrix3(std::array::from_fn(|i| {
                    let d = 1.0 + ax[i];
                    std::array::from_fn(|k| {
                        let diag = if i == k { p.lambda[i] / d } else { 0.0 };
                        diag - p.lambda[i] * x[i] * p.a[i][k] / (d * d)
                    })
                }))
            }
            (JacobianMode::Analytic, ModelKind::Ricker(p)) => {
                let ax = mat_vec(&p.a, x);
                Matrix3(std::array::from_fn(|i| {
                    let e = (p.r[i] * (1.0 - ax[i])).exp();
                    std::array::from_fn(|k| {
                        let diag = if i == k { e } else { 0.0 };
                        diag - x[i] * e * p.r[i] * p.a[i][k]
                    })
                }))
            }
            (JacobianMode::Analytic, ModelKind::External(e)) => match e.map.jacobian(x) {
                Some(j) => j?,
                None => self.fd_jacobian(x, DEFAULT_FD_STEP)?,
            },
        };
        if !j.is_finite() {
            return Err(ModelError::NumericOverflow(x.0));
        }
        Ok(j)
    }

    fn fd_jacobian(&self, x: Point3, h: f64) -> Result<Matrix3, ModelError> {
        let mut j = Matrix3::ZERO;
        for k in 0..3 {
            let step = h * (1.0 + x[k].abs());
            let mut plus = x;
            let mut minus = x;
            plus[k] += step;
            minus[k] -= step;
            let fp = self.eval(plus)?;
            let fm = self.eval(minus)?;
            for i in 0..3 {
                j.0[i][k] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        Ok(j)
    }

    /// Upper corner `M` of a box `[0, M]` that is mapped into itself and
    /// contains the global attractor.
    pub fn absorbing_box(&self) -> Result<Point3, ModelError> {
        match &self.kind {
            ModelKind::LeslieGower(p) => Ok(Point3(std::array::from_fn(|i| p.lambda[i] / p.a[i][i]))),
            ModelKind::Ricker(p) => {
                Ok(Point3(std::array::from_fn(|i| 1.1 * (p.r[i] - 1.0).exp() / (p.r[i] * p.a[i][i]))))
            }
            ModelKind::External(e) => e.absorbing_box.ok_or(ModelError::UnsupportedModel),
        }
    }

    /// `P` restricted to the axis of species `i`, as a scalar map.
    pub fn axis_map(&self, i: usize, s: f64) -> Result<f64, ModelError> {
        let mut x = Point3::ORIGIN;
        x[i] = s;
        Ok(self.eval(x)?[i])
    }
}

fn mat_vec(a: &[[f64; 3]; 3], x: Point3) -> [f64; 3] {
    std::array::from_fn(|i| a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2])
}

/// Number of scan samples for sign changes of `P_i(s e_i) − s` on `(0, M_i]`.
pub const AXIS_SCAN_SAMPLES: usize = 1000;

/// Sign-change brackets of `P_i(s e_i) − s` on `(lower, M_i]`.
pub fn axis_brackets(model: &MapModel, i: usize, lower: f64) -> Result<Vec<(f64, f64)>, ModelError> {
    let m = model.absorbing_box()?[i];
    let g = |s: f64| model.axis_map(i, s).map(|v| v - s);
    let mut brackets = Vec::new();
    let mut prev_s = lower;
    let mut prev_g = g(lower)?;
    for k in 1..=AXIS_SCAN_SAMPLES {
        let s = lower + (m - lower) * k as f64 / AXIS_SCAN_SAMPLES as f64;
        let gs = g(s)?;
        if (prev_g > 0.0 && gs <= 0.0) || (prev_g < 0.0 && gs >= 0.0) {
            brackets.push((prev_s, s));
        }
        // A sample exactly on the root starts the next bracket from the root.
        if gs != 0.0 {
            prev_g = gs;
        }
        prev_s = s;
    }
    Ok(brackets)
}

/// Bisection inside a bracket followed by Newton polishing of
/// `P_i(s e_i) − s`. Returns the root `s`.
pub fn axis_root(model: &MapModel, i: usize, bracket: (f64, f64)) -> Result<f64, ModelError> {
    let g = |s: f64| model.axis_map(i, s).map(|v| v - s);
    let (mut lo, mut hi) = bracket;
    let g_lo = g(lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (gm > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..5 {
        let mut x = Point3::ORIGIN;
        x[i] = s;
        let d = model.jacobian_unchecked(x)?.get(i, i) - 1.0;
        let gs = g(s)?;
        if gs == 0.0 || d.abs() < 1e-14 {
            break;
        }
        let next = s - gs / d;
        if !(next.is_finite() && next > 0.0) || g(next)?.abs() >= gs.abs() {
            break;
        }
        s = next;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H2,
    H3Prime,
    H4Prime,
    H6,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H2 => "H2",
            Hypothesis::H3Prime => "H3'",
            Hypothesis::H4Prime => "H4'",
            Hypothesis::H6 => "H6",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A sampled quantity that failed (or nearly failed) its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub points: Vec<Point3>,
    pub face: Option<SpeciesSubset>,
    pub quantity: String,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: Hypothesis,
    pub samples: usize,
    pub violations: Vec<Violation>,
    /// Strict inequalities that held by less than [`NEAR_THRESHOLD`].
    pub near_threshold: Vec<Violation>,
    pub verdict: Verdict,
}

/// Strict inequalities satisfied by less than this are not counted as passes.
pub const NEAR_THRESHOLD: f64 = 1e-9;

impl HypothesisReport {
    fn finish(hypothesis: Hypothesis, samples: usize, violations: Vec<Violation>, near: Vec<Violation>) -> Self {
        let verdict = if !violations.is_empty() {
            Verdict::Fail
        } else if !near.is_empty() {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        HypothesisReport { hypothesis, samples, violations, near_threshold: near, verdict }
    }
}

/// Outcome of one strict-inequality test `measured > threshold`.
enum Strict {
    Holds,
    Near,
    Fails,
}

fn strict_gt(measured: f64, threshold: f64) -> Strict {
    if !(measured > threshold) {
        Strict::Fails
    } else if measured - threshold <= NEAR_THRESHOLD {
        Strict::Near
    } else {
        Strict::Holds
    }
}

/// All seven nonempty species subsets.
pub fn all_faces() -> impl Iterator<Item = SpeciesSubset> {
    (1u8..=7).filter_map(SpeciesSubset::from_mask)
}

fn sample_rng(seed: u64, face: SpeciesSubset, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::mix_seed(seed, ((face.mask() as u64) << 32) | index as u64))
}

/// Uniform point of the open face `Ḣ_I⁺ ∩ [0, M]`.
fn sample_face_point(rng: &mut ChaCha8Rng, face: SpeciesSubset, m: Point3) -> Point3 {
    let mut x = Point3::ORIGIN;
    for i in face.members() {
        // (0, M_i]: reject exact zero so the point stays in the open face.
        x[i] = m[i] * (1.0 - rng.random::<f64>());
    }
    x
}

/// (H2): faces, their relative interiors and boundaries are forward invariant.
/// Checks that images of points of `Ḣ_I⁺` vanish outside `I` and stay
/// positive on `I`.
pub fn check_h2(model: &MapModel, budget: usize, seed: u64) -> Result<HypothesisReport, ModelError> {
    let m = model.absorbing_box()?;
    let budget = budget.max(1);
    let faces: Vec<SpeciesSubset> = all_faces().collect();
    let jobs: Vec<(SpeciesSubset, usize)> = faces.iter().flat_map(|&f| (0..budget).map(move |k| (f, k))).collect();
    let results: Vec<(Vec<Violation>, Vec<Violation>)> = jobs
        .par_iter()
        .map(|&(face, k)| {
            let x = sample_face_point(&mut sample_rng(seed, face, k), face, m);
            let mut bad = Vec::new();
            let mut near = Vec::new();
            let px = match model.eval(x) {
                Ok(p) => p,
                Err(e) => {
                    bad.push(Violation {
                        points: vec![x],
                        face: Some(face),
                        quantity: format!("evaluation error: {e}"),
                        measured: f64::NAN,
                        threshold: 0.0,
                    });
                    return (bad, near);
                }
            };
            if let Some(outside) = face.complement() {
                for j in outside.members() {
                    if px[j].abs() > 1e-12 {
                        bad.push(Violation {
                            points: vec![x, px],
                            face: Some(face),
                            quantity: format!("|P_{}(x)| off the face", j + 1),
                            measured: px[j].abs(),
                            threshold: 1e-12,
                        });
                    }
                }
            }
            for i in face.members() {
                let v = Violation {
                    points: vec![x, px],
                    face: Some(face),
                    quantity: format!("P_{}(x) on the open face", i + 1),
                    measured: px[i],
                    threshold: 0.0,
                };
                match strict_gt(px[i], 0.0) {
                    Strict::Holds => {}
                    Strict::Near => near.push(v),
                    Strict::Fails => bad.push(v),
                }
            }
            (bad, near)
        })
        .collect();
    let (bad, near) = merge(results);
    Ok(HypothesisReport::finish(Hypothesis::H2, jobs.len(), bad, near))
}

fn merge(results: Vec<(Vec<Violation>, Vec<Violation>)>) -> (Vec<Violation>, Vec<Violation>) {
    results.into_iter().fold((Vec::new(), Vec::new()), |(mut b, mut n), (b2, n2)| {
        b.extend(b2);
        n.extend(n2);
        (b, n)
    })
}

/// (H3′): at `x ∈ Ḣ_I⁺` the `I×I` block of `DP(x)⁻¹` is positive, and every
/// nonzero `v ∈ K_Ī` has `(DP(x)⁻¹ v)_j > 0` for some `j ∈ I`.
pub fn check_h3prime(model: &MapModel, budget: usize, seed: u64) -> Result<HypothesisReport, ModelError> {
    let m = model.absorbing_box()?;
    let budget = budget.max(1);
    let jobs: Vec<(SpeciesSubset, usize)> = all_faces().flat_map(|f| (0..budget).map(move |k| (f, k))).collect();
    let results: Vec<(Vec<Violation>, Vec<Violation>)> = jobs
        .par_iter()
        .map(|&(face, k)| {
            let x = sample_face_point(&mut sample_rng(seed ^ 0x3, face, k), face, m);
            h3prime_at(model, x, face)
        })
        .collect();
    let (bad, near) = merge(results);
    Ok(HypothesisReport::finish(Hypothesis::H3Prime, jobs.len(), bad, near))
}

fn h3prime_at(model: &MapModel, x: Point3, face: SpeciesSubset) -> (Vec<Violation>, Vec<Violation>) {
    let mut bad = Vec::new();
    let mut near = Vec::new();
    let viol = |quantity: String, measured: f64| Violation {
        points: vec![x],
        face: Some(face),
        quantity,
        measured,
        threshold: 0.0,
    };
    let inv = match model.jacobian_unchecked(x) {
        Ok(j) => j.inverse(SINGULAR_DET),
        Err(e) => {
            bad.push(viol(format!("jacobian error: {e}"), f64::NAN));
            return (bad, near);
        }
    };
    let Some(inv) = inv else {
        near.push(viol("singular Jacobian".to_string(), 0.0));
        return (bad, near);
    };
    for i in face.members() {
        for j in face.members() {
            let v = viol(format!("(DP^-1)_{}{}", i + 1, j + 1), inv.get(i, j));
            match strict_gt(inv.get(i, j), 0.0) {
                Strict::Holds => {}
                Strict::Near => near.push(v),
                Strict::Fails => bad.push(v),
            }
        }
    }
    if let Some(outside) = face.complement() {
        // The block M = (DP^-1)_{I, Ī} fails iff some v ≥ 0, v ≠ 0 has M v ≤ 0.
        let rows: Vec<usize> = face.members().collect();
        let cols: Vec<usize> = outside.members().collect();
        let worst = match (rows.len(), cols.len()) {
            // One row: every entry must be positive.
            (1, _) => cols.iter().map(|&c| inv.get(rows[0], c)).fold(f64::INFINITY, f64::min),
            // One column: some entry must be positive.
            (_, 1) => rows.iter().map(|&r| inv.get(r, cols[0])).fold(f64::NEG_INFINITY, f64::max),
            _ => unreachable!("proper faces of a 3-dimensional octant"),
        };
        let v = viol("(DP^-1 v)_I for v in K_Ibar".to_string(), worst);
        match strict_gt(worst, 0.0) {
            Strict::Holds => {}
            Strict::Near => near.push(v),
            Strict::Fails => bad.push(v),
        }
    }
    (bad, near)
}

/// (H4′): a unique positive fixed point `u_i` on each axis with
/// `0 < ∂P_i/∂x_i(u_i) < 1` and `∂P_i/∂x_j(u_i) < 0` for `j ≠ i`.
pub fn check_h4prime(model: &MapModel) -> Result<HypothesisReport, ModelError> {
    let mut bad = Vec::new();
    let mut near = Vec::new();
    for i in 0..3 {
        let brackets = axis_brackets(model, i, 1e-8)?;
        if brackets.is_empty() {
            return Err(ModelError::NoAxialFixedPoint { axis: i + 1 });
        }
        if brackets.len() > 1 {
            bad.push(Violation {
                points: brackets.iter().map(|b| axis_point(i, 0.5 * (b.0 + b.1))).collect(),
                face: Some(SpeciesSubset::single(i)),
                quantity: "number of axial fixed points".to_string(),
                measured: brackets.len() as f64,
                threshold: 1.0,
            });
        }
        let u = axis_point(i, axis_root(model, i, brackets[0])?);
        let j = model.jacobian_unchecked(u)?;
        let mut test = |quantity: String, ok: Strict, measured: f64, threshold: f64| {
            let v = Violation { points: vec![u], face: Some(SpeciesSubset::single(i)), quantity, measured, threshold };
            match ok {
                Strict::Holds => {}
                Strict::Near => near.push(v),
                Strict::Fails => bad.push(v),
            }
        };
        let d = j.get(i, i);
        test(format!("dP_{0}/dx_{0} > 0", i + 1), strict_gt(d, 0.0), d, 0.0);
        test(format!("dP_{0}/dx_{0} < 1", i + 1), strict_gt(1.0 - d, 0.0), d, 1.0);
        for k in (0..3).filter(|&k| k != i) {
            let c = j.get(i, k);
            test(format!("dP_{}/dx_{} < 0", i + 1, k + 1), strict_gt(-c, 0.0), c, 0.0);
        }
    }
    Ok(HypothesisReport::finish(Hypothesis::H4Prime, 3 * AXIS_SCAN_SAMPLES, bad, near))
}

fn axis_point(i: usize, s: f64) -> Point3 {
    let mut x = Point3::ORIGIN;
    x[i] = s;
    x
}

/// (H6): for `x, y ∈ Ḣ_I⁺` with `0 ≪_I Px ≪_I Py`, `P_i x / P_i y ≥ x_i / y_i`
/// for `i ∈ I`. Pairs are drawn by rejection sampling; `budget` accepted
/// pairs per face, at most 50 attempts per requested pair.
pub fn check_h6(model: &MapModel, budget: usize, seed: u64) -> Result<HypothesisReport, ModelError> {
    let m = model.absorbing_box()?;
    let budget = budget.max(1);
    let mut bad = Vec::new();
    let mut accepted = 0usize;
    for face in all_faces() {
        let mut face_accepted = 0usize;
        for attempt in 0..budget * 50 {
            if face_accepted == budget {
                break;
            }
            let mut rng = sample_rng(seed ^ 0x6, face, attempt);
            let mut x = sample_face_point(&mut rng, face, m);
            let mut y = sample_face_point(&mut rng, face, m);
            let mut px = model.eval(x)?;
            let mut py = model.eval(y)?;
            let lt = |p: &Point3, q: &Point3| face.members().all(|i| p[i] < q[i]);
            if lt(&py, &px) {
                std::mem::swap(&mut x, &mut y);
                std::mem::swap(&mut px, &mut py);
            }
            if !(face.members().all(|i| px[i] > 0.0) && lt(&px, &py)) {
                continue;
            }
            face_accepted += 1;
            for i in face.members() {
                let lhs = px[i] / py[i];
                let rhs = x[i] / y[i];
                if lhs < rhs - 1e-10 {
                    bad.push(Violation {
                        points: vec![x, y],
                        face: Some(face),
                        quantity: format!("P_{0}x/P_{0}y - x_{0}/y_{0}", i + 1),
                        measured: lhs - rhs,
                        threshold: -1e-10,
                    });
                }
            }
        }
        accepted += face_accepted;
    }
    // Equality is admissible here, so there is no near-threshold class.
    Ok(HypothesisReport::finish(Hypothesis::H6, accepted, bad, Vec::new()))
}

/// Runs all four checkers with one budget.
pub fn check_all(model: &MapModel, budget: usize, seed: u64) -> Result<Vec<HypothesisReport>, ModelError> {
    Ok(vec![
        check_h2(model, budget, seed)?,
        check_h3prime(model, budget, seed)?,
        check_h4prime(model)?,
        check_h6(model, budget, seed)?,
    ])
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// λ = 2, all `a_ij = 1`: the invariant plane `x1 + x2 + x3 = 1` is a
    /// continuum of fixed points.
    pub fn lg_a() -> MapModel {
        MapModel::leslie_gower(LeslieGowerParams::symmetric(2.0, 1.0, 1.0).unwrap())
    }

    /// λ = 3, `a_ii = 1`, `a_ij = 0.5`.
    pub fn lg_b() -> MapModel {
        MapModel::leslie_gower(LeslieGowerParams::symmetric(3.0, 1.0, 0.5).unwrap())
    }

    /// λ = 2, `a_ii = 1`, `a_ij = 2`: bistable faces.
    pub fn lg_c() -> MapModel {
        MapModel::leslie_gower(LeslieGowerParams::symmetric(2.0, 1.0, 2.0).unwrap())
    }

    /// r = 0.5, `a_ii = 1`, `a_ij = 0.5`.
    pub fn ricker() -> MapModel {
        MapModel::ricker(RickerParams::new([0.5; 3], [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]]).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        let p = lg_b().eval(Point3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(p.0.iter().all(|v| close(*v, 1.0, 1e-15)));
        assert_eq!(lg_a().eval(Point3::new(1.0, 0.0, 0.0)).unwrap(), Point3::new(1.0, 0.0, 0.0));
        for m in [lg_a(), lg_b(), lg_c(), ricker()] {
            assert_eq!(m.eval(Point3::ORIGIN).unwrap(), Point3::ORIGIN);
        }
        let img = lg_b().eval(Point3::new(0.7, 0.0, 1.3)).unwrap();
        assert_eq!(img[1], 0.0);
    }

    #[test]
    fn eval_overflow_is_reported() {
        let m = MapModel::from_fn("blowup", Some(Point3::new(1.0, 1.0, 1.0)), |x| {
            Point3::new(1.0 / (x[0] - x[0]), 0.0, 0.0)
        });
        assert!(matches!(m.eval(Point3::new(1.0, 0.0, 0.0)), Err(ModelError::NumericOverflow(_))));
    }

    #[test]
    fn jacobian_at_planar_fixed_point_of_lg_b() {
        let j = lg_b().jacobian(Point3::new(4.0 / 3.0, 4.0 / 3.0, 0.0)).unwrap();
        let expect = [[5.0 / 9.0, -2.0 / 9.0], [-2.0 / 9.0, 5.0 / 9.0]];
        for (i, row) in expect.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                assert!(close(j.get(i, k), *e, 1e-15), "{j:?}");
            }
        }
        assert!(close(j.get(2, 2), 9.0 / 7.0, 1e-15));
        assert_eq!(j.get(2, 0), 0.0);
        assert_eq!(j.get(2, 1), 0.0);
    }

    #[test]
    fn jacobian_at_axial_fixed_point_of_lg_b() {
        let j = lg_b().jacobian(Point3::new(2.0, 0.0, 0.0)).unwrap();
        assert!(close(j.get(0, 0), 1.0 / 3.0, 1e-15));
        assert!(close(j.get(1, 1), 1.5, 1e-15));
        assert!(close(j.get(2, 2), 1.5, 1e-15));
        for (r, c) in [(1, 0), (1, 2), (2, 0), (2, 1)] {
            assert_eq!(j.get(r, c), 0.0);
        }
        // Cross partial −λ₁ x₁ a₁₂ / (1 + a₁₁ x₁)² = −1/3.
        assert!(close(j.get(0, 1), -1.0 / 3.0, 1e-15));
    }

    #[test]
    fn finite_difference_matches_analytic() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in [lg_b(), ricker()] {
            let m = model.absorbing_box().unwrap();
            let fd = model.clone().with_jacobian_mode(JacobianMode::FiniteDifference { h: DEFAULT_FD_STEP });
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let x = Point3(std::array::from_fn(|i| rng.random::<f64>() * m[i]));
                let ja = model.jacobian_unchecked(x).unwrap();
                let jf = fd.jacobian_unchecked(x).unwrap();
                worst = worst.max(ja.max_abs_diff(&jf));
            }
            assert!(worst < 1e-6, "{} gap {worst:e}", model.fingerprint());
        }
    }

    #[test]
    fn finite_difference_keeps_structural_zeros() {
        let fd = lg_b().with_jacobian_mode(JacobianMode::FiniteDifference { h: DEFAULT_FD_STEP });
        let x = Point3::new(1.3, 0.0, 0.4);
        let j = fd.jacobian_unchecked(x).unwrap();
        let h = DEFAULT_FD_STEP * 2.0;
        assert!(j.get(1, 0).abs() <= 10.0 * h * h && j.get(1, 2).abs() <= 10.0 * h * h);
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let m = MapModel::from_fn("squash", Some(Point3::new(1.0, 1.0, 1.0)), |x| Point3::new(x[0], x[0], x[2]));
        assert!(matches!(m.jacobian(Point3::new(0.5, 0.5, 0.5)), Err(ModelError::SingularJacobian { .. })));
    }

    #[test]
    fn absorbing_boxes() {
        assert_eq!(lg_a().absorbing_box().unwrap(), Point3::new(2.0, 2.0, 2.0));
        assert_eq!(lg_b().absorbing_box().unwrap(), Point3::new(3.0, 3.0, 3.0));
        let m = ricker().absorbing_box().unwrap();
        let expect = 1.1 * (-0.5f64).exp() / 0.5;
        assert!(m.0.iter().all(|v| close(*v, expect, 1e-15)));
        assert!(close(expect, 1.334, 1e-3));
        let ext = MapModel::from_fn("id", None, |x| x);
        assert!(matches!(ext.absorbing_box(), Err(ModelError::UnsupportedModel)));
    }

    #[test]
    fn absorbing_box_is_forward_invariant() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [lg_a(), lg_b(), lg_c(), ricker()] {
            let m = model.absorbing_box().unwrap();
            for _ in 0..500 {
                let x = Point3(std::array::from_fn(|i| rng.random::<f64>() * m[i]));
                let p = model.eval(x).unwrap();
                assert!((0..3).all(|i| p[i] >= 0.0 && p[i] <= m[i]), "{x:?} -> {p:?}");
            }
        }
    }

    #[test]
    fn built_ins_preserve_faces_and_orientation() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in [lg_b(), lg_c(), ricker()] {
            let m = model.absorbing_box().unwrap();
            for k in 0..300 {
                let mut x = Point3(std::array::from_fn(|i| rng.random::<f64>() * m[i]));
                x[k % 3] = 0.0;
                assert_eq!(model.eval(x).unwrap()[k % 3], 0.0);
                assert!(model.jacobian(x).unwrap().det() > 0.0);
            }
        }
    }

    #[test]
    fn lg_b_passes_all_hypotheses() {
        for r in check_all(&lg_b(), 200, 0).unwrap() {
            assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
            assert!(r.violations.is_empty());
        }
    }

    #[test]
    fn ricker_passes_h2() {
        let r = check_h2(&ricker(), 100, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.samples, 700);
    }

    #[test]
    fn h2_flags_a_map_leaving_the_face() {
        let m = MapModel::from_fn("shift", Some(Point3::new(1.0, 1.0, 1.0)), |x| Point3::new(x[0], x[1] + 0.1, x[2]));
        let r = check_h2(&m, 20, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let face13 = SpeciesSubset::from_species(&[1, 3]).unwrap();
        assert!(r.violations.iter().any(|v| v.face == Some(face13)));
    }

    #[test]
    fn h3prime_inverse_blocks_for_lg_b() {
        let inv = lg_b().jacobian(Point3::new(1.0, 1.0, 1.0)).unwrap().inverse(1e-12).unwrap();
        assert!(inv.0.iter().flatten().all(|v| *v > 0.0));
        let inv = lg_b().jacobian(Point3::new(2.0, 0.0, 0.0)).unwrap().inverse(1e-12).unwrap();
        assert!(close(inv.get(0, 0), 3.0, 1e-14));
    }

    #[test]
    fn h3prime_flags_missing_competition() {
        let mut p = LeslieGowerParams::symmetric(3.0, 1.0, 0.5).unwrap();
        p.a[0][1] = 0.0;
        let r = check_h3prime(&MapModel::leslie_gower(p), 50, 0).unwrap();
        assert_ne!(r.verdict, Verdict::Pass);
        let face12 = SpeciesSubset::from_species(&[1, 2]).unwrap();
        assert!(r.violations.iter().chain(&r.near_threshold).any(|v| v.face == Some(face12)));
    }

    #[test]
    fn h4prime_examples() {
        let r = check_h4prime(&lg_b()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(check_h4prime(&ricker()).unwrap().verdict, Verdict::Pass);
        let u = axis_root(&ricker(), 0, axis_brackets(&ricker(), 0, 1e-8).unwrap()[0]).unwrap();
        assert!(close(u, 1.0, 1e-12));
        let j = ricker().jacobian(Point3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(close(j.get(0, 0), 0.5, 1e-15));

        let mut p = LeslieGowerParams::symmetric(3.0, 1.0, 0.5).unwrap();
        p.lambda[0] = 0.9;
        let err = check_h4prime(&MapModel::leslie_gower(p)).unwrap_err();
        assert_eq!(err, ModelError::NoAxialFixedPoint { axis: 1 });
    }

    #[test]
    fn h4prime_flags_multiple_axial_roots() {
        // Three fixed points on axis 1 at s = 0.5, 1, 1.5.
        let m = MapModel::from_fn("wiggle", Some(Point3::new(2.0, 2.0, 2.0)), |x| {
            let s = x[0];
            let g = -(s - 0.5) * (s - 1.0) * (s - 1.5);
            Point3::new(s + 0.5 * g, 2.0 * x[1] / (1.0 + x[1]), 2.0 * x[2] / (1.0 + x[2]))
        });
        let r = check_h4prime(&m);
        match r {
            Ok(r) => assert!(r.violations.iter().any(|v| v.quantity.contains("number"))),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn lg_axial_fixed_points_are_closed_form() {
        for model in [lg_a(), lg_b(), lg_c()] {
            let ModelKind::LeslieGower(p) = &model.kind else { unreachable!() };
            for i in 0..3 {
                let b = axis_brackets(&model, i, 1e-8).unwrap();
                assert_eq!(b.len(), 1);
                let u = axis_root(&model, i, b[0]).unwrap();
                assert!(close(u, (p.lambda[i] - 1.0) / p.a[i][i], 1e-10));
            }
        }
    }

    #[test]
    fn h6_examples() {
        assert_eq!(check_h6(&lg_b(), 200, 0).unwrap().verdict, Verdict::Pass);
        let half = MapModel::from_fn("half", Some(Point3::new(1.0, 1.0, 1.0)), |x| Point3(x.0.map(|v| 0.5 * v)));
        assert_eq!(check_h6(&half, 100, 0).unwrap().verdict, Verdict::Pass);
        let square =
            MapModel::from_fn("square", Some(Point3::new(2.0, 2.0, 2.0)), |x| Point3::new(x[0] * x[0], x[1], x[2]));
        let r = check_h6(&square, 100, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(!r.violations.is_empty());
    }

    #[test]
    fn parameter_validation() {
        assert!(LeslieGowerParams::new([0.9, 3.0, 3.0], [[1.0; 3]; 3]).is_err());
        assert!(LeslieGowerParams::new([3.0; 3], [[1.0, 0.0, 1.0], [1.0; 3], [1.0; 3]]).is_err());
        assert!(RickerParams::new([1.5, 0.5, 0.5], [[1.0; 3]; 3]).is_err());
    }
}
