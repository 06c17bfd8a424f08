//! Approximation of the carrying simplex as a radial graph over `Δ`.
//!
//! Face curves are computed first by a 1D graph transform on each coordinate
//! plane. The surface iteration starts at the absorbing-box boundary, pushes
//! every node through `P`, projects radially and re-grids by piecewise linear
//! interpolation over the pushed-forward triangulation, with boundary nodes
//! pinned to the face curves.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    make_grid, radial_project, DeltaGrid, GeometryError, Point3, PushforwardInterpolator, RadialGraph, SimplexPoint,
    SpeciesSubset,
};
use crate::models::{axis_brackets, axis_root, MapModel, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("folded image: {0}")]
    FoldedImage(String),
    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NonConvergence { iterations: usize, change: f64 },
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),
    #[error("face {0} is not a planar face")]
    NotPlanar(SpeciesSubset),
}

impl SimplexError {
    /// True for the numerical failures of the iteration (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SimplexError::FoldedImage(_)
                | SimplexError::NonConvergence { .. }
                | SimplexError::Geometry(GeometryError::DegenerateTriangle { .. })
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    pub max_iters: usize,
    /// Stopping threshold on the largest node radius change.
    pub tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions { max_iters: 500, tol: 1e-8 }
    }
}

/// Restriction of the carrying simplex to a planar face, sampled at
/// `t_k = k/L` where `t = y_b` for the face `{a, b}`, `a < b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceCurve {
    pub face: SpeciesSubset,
    pub rho: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FaceCurve {
    pub fn level(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn direction(&self, k: usize) -> SimplexPoint {
        direction_on_face(self.face, k as f64 / self.level() as f64)
    }

    pub fn point(&self, k: usize) -> Point3 {
        self.direction(k).scaled(self.rho[k])
    }

    /// Radius at parameter `t ∈ [0, 1]` by linear interpolation.
    pub fn radius_at(&self, t: f64) -> f64 {
        lerp_nodes(&self.rho, t)
    }
}

fn direction_on_face(face: SpeciesSubset, t: f64) -> SimplexPoint {
    let (a, b) = face.pair().expect("planar face");
    let mut y = [0.0; 3];
    y[a] = 1.0 - t;
    y[b] = t;
    SimplexPoint(y)
}

fn lerp_nodes(values: &[f64], t: f64) -> f64 {
    let l = values.len() - 1;
    let s = (t * l as f64).clamp(0.0, l as f64);
    let k = (s.floor() as usize).min(l.saturating_sub(1));
    let f = s - k as f64;
    if l == 0 {
        return values[0];
    }
    (1.0 - f) * values[k] + f * values[k + 1]
}

/// Radius of the absorbing-box boundary along direction `y`.
fn box_radius(m: &Point3, y: &SimplexPoint) -> f64 {
    (0..3).filter(|&i| y[i] > 0.0).map(|i| m[i] / y[i]).fold(f64::INFINITY, f64::min)
}

fn axial_radius(model: &MapModel, i: usize) -> Result<f64, ModelError> {
    let brackets = axis_brackets(model, i, 1e-8)?;
    let first = *brackets.first().ok_or(ModelError::NoAxialFixedPoint { axis: i + 1 })?;
    axis_root(model, i, first)
}

fn image(model: &MapModel, x: Point3) -> Result<Point3, SimplexError> {
    let mut p = model.eval(x)?;
    for i in 0..3 {
        if p[i] < -1e-9 {
            return Err(SimplexError::HypothesisViolation(format!("P({:?}) = {:?} leaves the octant", x.0, p.0)));
        }
        p[i] = p[i].max(0.0);
    }
    Ok(p)
}

pub fn compute_face_curve(
    model: &MapModel,
    face: SpeciesSubset,
    level: usize,
    opts: IterationOptions,
) -> Result<FaceCurve, SimplexError> {
    let (a, b) = face.pair().ok_or(SimplexError::NotPlanar(face))?;
    if !(1..=1 << 16).contains(&level) {
        return Err(GeometryError::LevelOutOfRange(level).into());
    }
    let m = model.absorbing_box()?;
    let ends = (axial_radius(model, a)?, axial_radius(model, b)?);
    let l = level as f64;
    let mut rho: Vec<f64> = (0..=level).map(|k| box_radius(&m, &direction_on_face(face, k as f64 / l))).collect();
    rho[0] = ends.0;
    rho[level] = ends.1;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let pushed: Vec<(f64, f64)> = (0..=level)
            .into_par_iter()
            .map(|k| {
                let x = direction_on_face(face, k as f64 / l).scaled(rho[k]);
                let p = image(model, x)?;
                let (y, r) = radial_project(p)?;
                Ok((y[b], r))
            })
            .collect::<Result<_, SimplexError>>()?;
        for w in pushed.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(SimplexError::FoldedImage(format!(
                    "face {face}: projected directions {} and {} are not increasing",
                    w[0].0, w[1].0
                )));
            }
        }
        let mut next = Vec::with_capacity(level + 1);
        let mut seg = 0;
        for k in 0..=level {
            let t = k as f64 / l;
            while seg + 2 < pushed.len() && pushed[seg + 1].0 < t {
                seg += 1;
            }
            let (t0, r0) = pushed[seg];
            let (t1, r1) = pushed[seg + 1];
            let f = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            next.push(r0 + f * (r1 - r0));
        }
        next[0] = ends.0;
        next[level] = ends.1;
        change = next.iter().zip(&rho).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        rho = next;
        if change < opts.tol {
            break;
        }
    }
    if change > 100.0 * opts.tol {
        return Err(SimplexError::NonConvergence { iterations, change });
    }
    Ok(FaceCurve { face, rho, iterations, residual: change })
}

/// A converged surface together with its face curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexApproximation {
    pub surface: RadialGraph,
    pub face_curves: Vec<FaceCurve>,
    pub fingerprint: String,
    pub opts: IterationOptions,
    /// Largest node movement in the last iteration.
    pub hausdorff_step: f64,
    /// Largest node movement per iteration.
    pub change_history: Vec<f64>,
}

impl SimplexApproximation {
    pub fn level(&self) -> usize {
        self.surface.grid.level
    }

    pub fn converged(&self) -> bool {
        self.hausdorff_step < self.opts.tol
    }

    /// True if the change sequence increases somewhere after iteration 10,
    /// an early sign of a folding image.
    pub fn nonmonotone_tail(&self) -> bool {
        self.change_history.iter().skip(10).collect::<Vec<_>>().windows(2).any(|w| w[1] > w[0])
    }

    /// Largest `|rho − rho_face|` over boundary nodes.
    pub fn boundary_mismatch(&self) -> f64 {
        let grid = &self.surface.grid;
        self.face_curves
            .iter()
            .flat_map(|c| grid.face_nodes(c.face).into_iter().enumerate().map(move |(k, n)| (c.rho[k], n)))
            .map(|(r, n)| (r - self.surface.rho[n]).abs())
            .fold(0.0, f64::max)
    }
}

/// Pins boundary nodes of `rho` to the face curves; corners take the first
/// face containing them.
fn pin_boundary(grid: &DeltaGrid, curves: &[FaceCurve], rho: &mut [f64]) {
    for c in curves.iter().rev() {
        for (k, n) in grid.face_nodes(c.face).into_iter().enumerate() {
            rho[n] = c.rho[k];
        }
    }
}

pub fn compute_surface(
    model: &MapModel,
    grid: DeltaGrid,
    opts: IterationOptions,
) -> Result<SimplexApproximation, SimplexError> {
    let face_curves = SpeciesSubset::PLANAR
        .iter()
        .map(|&f| compute_face_curve(model, f, grid.level, opts))
        .collect::<Result<Vec<_>, _>>()?;
    compute_surface_with_faces(model, grid, face_curves, opts)
}

/// Surface iteration with precomputed face curves at the grid's level.
pub fn compute_surface_with_faces(
    model: &MapModel,
    grid: DeltaGrid,
    face_curves: Vec<FaceCurve>,
    opts: IterationOptions,
) -> Result<SimplexApproximation, SimplexError> {
    let m = model.absorbing_box()?;
    let mut rho: Vec<f64> = grid.nodes.iter().map(|y| box_radius(&m, y)).collect();
    pin_boundary(&grid, &face_curves, &mut rho);
    let mut history = Vec::new();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let src: Vec<(SimplexPoint, f64)> = grid
            .nodes
            .par_iter()
            .zip(rho.par_iter())
            .map(|(y, &r)| {
                let p = image(model, y.scaled(r))?;
                Ok(radial_project(p)?)
            })
            .collect::<Result<_, SimplexError>>()?;
        let interp = PushforwardInterpolator::new(&src, &grid.triangles)?;
        if let Some((t, area)) = interp.signed_areas().enumerate().find(|(_, a)| !(*a > 0.0)) {
            return Err(SimplexError::FoldedImage(format!("image triangle {t} has signed area {area:e}")));
        }
        let mut next: Vec<f64> = grid
            .nodes
            .par_iter()
            .enumerate()
            .map(|(n, y)| if grid.is_boundary(n) { Ok(rho[n]) } else { Ok(interp.eval(y)?.radius) })
            .collect::<Result<_, GeometryError>>()?;
        pin_boundary(&grid, &face_curves, &mut next);
        change = next.iter().zip(&rho).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        history.push(change);
        rho = next;
        if change < opts.tol {
            break;
        }
    }
    if change > 100.0 * opts.tol {
        return Err(SimplexError::NonConvergence { iterations, change });
    }
    let mut surface = RadialGraph::new(grid, rho);
    surface.iterations = iterations;
    surface.last_update = change;
    Ok(SimplexApproximation {
        surface,
        face_curves,
        fingerprint: model.fingerprint(),
        opts,
        hausdorff_step: change,
        change_history: history,
    })
}

/// Convenience wrapper building the grid first.
pub fn compute_surface_at_level(
    model: &MapModel,
    level: usize,
    opts: IterationOptions,
) -> Result<SimplexApproximation, SimplexError> {
    compute_surface(model, make_grid(level)?, opts)
}

/// Max over nodes of the radial (1-norm) distance from `P(x)` to the surface.
pub fn invariance_residual(model: &MapModel, approx: &SimplexApproximation) -> Result<f64, SimplexError> {
    let s = &approx.surface;
    let d: Vec<f64> = (0..s.grid.len())
        .into_par_iter()
        .map(|n| {
            let (y, r) = radial_project(image(model, s.point(n))?)?;
            Ok((r - s.radius_at(&y)).abs())
        })
        .collect::<Result<_, SimplexError>>()?;
    Ok(d.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnorderednessReport {
    pub margin: f64,
    pub pairs_checked: usize,
    /// Node index pairs `(p, q)` with `p ≪ q` by more than `margin`.
    pub violations: Vec<(usize, usize)>,
}

impl UnorderednessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const UNORDERED_MARGIN: f64 = 1e-6;

/// Exhaustive scan for pairs of surface points with `p ≪ q`.
pub fn unorderedness_check(approx: &SimplexApproximation) -> UnorderednessReport {
    unorderedness_of_points(&approx.surface.points(), UNORDERED_MARGIN)
}

pub fn unorderedness_of_points(points: &[Point3], margin: f64) -> UnorderednessReport {
    let n = points.len();
    let violations: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|p| {
            (0..n).filter(move |&q| q != p && (0..3).all(|i| points[q][i] - points[p][i] > margin)).map(move |q| (p, q))
        })
        .collect();
    UnorderednessReport { margin, pairs_checked: n * n.saturating_sub(1) / 2, violations }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub n_seeds: usize,
    pub burn_in: usize,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Iterates random seeds of `[0, M]³ \ {0}` and measures their radial
/// distance to the surface.
pub fn attraction_check(
    model: &MapModel,
    approx: &SimplexApproximation,
    n_seeds: usize,
    burn_in: usize,
    seed: u64,
) -> Result<AttractionReport, SimplexError> {
    let m = model.absorbing_box()?;
    let seeds: Vec<Point3> = (0..n_seeds)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::mix_seed(seed, k as u64));
            loop {
                let x = Point3(std::array::from_fn(|i| rng.random::<f64>() * m[i]));
                if x.l1() > 1e-12 {
                    return x;
                }
            }
        })
        .collect();
    let d = attraction_distances(model, approx, &seeds, burn_in)?;
    let max_distance = d.iter().copied().fold(0.0, f64::max);
    let mean_distance = if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 };
    let threshold = (2.0 / approx.level() as f64).max(1e-3) * approx.surface.mean_radius();
    Ok(AttractionReport { n_seeds, burn_in, max_distance, mean_distance, threshold, passed: max_distance < threshold })
}

/// Radial distance to the surface of each seed after `burn_in` steps.
pub fn attraction_distances(
    model: &MapModel,
    approx: &SimplexApproximation,
    seeds: &[Point3],
    burn_in: usize,
) -> Result<Vec<f64>, SimplexError> {
    seeds
        .par_iter()
        .map(|&x0| {
            let mut x = x0;
            for _ in 0..burn_in {
                x = image(model, x)?;
            }
            let (y, r) = radial_project(x)?;
            Ok((r - approx.surface.radius_at(&y)).abs())
        })
        .collect()
}

/// CSV with header `y1,y2,y3,rho,x1,x2,x3`, one row per node.
pub fn surface_csv(surface: &RadialGraph) -> String {
    let mut out = String::from("y1,y2,y3,rho,x1,x2,x3\n");
    for (n, y) in surface.grid.nodes.iter().enumerate() {
        let x = surface.point(n);
        let _ = writeln!(out, "{},{},{},{},{},{},{}", y[0], y[1], y[2], surface.rho[n], x[0], x[1], x[2]);
    }
    out
}

/// OBJ mesh with vertices `rho · y` and 1-indexed triangular faces.
pub fn surface_obj(surface: &RadialGraph) -> String {
    let mut out = String::new();
    for n in 0..surface.grid.len() {
        let x = surface.point(n);
        let _ = writeln!(out, "v {} {} {}", x[0], x[1], x[2]);
    }
    for t in &surface.grid.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::*;

    fn face12() -> SpeciesSubset {
        SpeciesSubset::from_species(&[1, 2]).unwrap()
    }

    #[test]
    fn face_curve_examples() {
        let c = compute_face_curve(&lg_a(), face12(), 64, IterationOptions::default()).unwrap();
        assert!(c.rho.iter().all(|r| (r - 1.0).abs() <= 5e-3), "{:?}", c.rho);

        let c = compute_face_curve(&lg_b(), face12(), 32, IterationOptions::default()).unwrap();
        assert!((c.rho[0] - 2.0).abs() < 1e-10 && (c.rho[32] - 2.0).abs() < 1e-10);
        assert!((c.rho[16] - 8.0 / 3.0).abs() < 1e-7, "{}", c.rho[16]);

        let c = compute_face_curve(&lg_c(), face12(), 32, IterationOptions::default()).unwrap();
        assert!((c.rho[16] - 2.0 / 3.0).abs() < 1e-7, "{}", c.rho[16]);
        assert!((c.rho[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn face_curve_rejects_axes() {
        let err = compute_face_curve(&lg_a(), SpeciesSubset::single(0), 8, IterationOptions::default()).unwrap_err();
        assert!(matches!(err, SimplexError::NotPlanar(_)));
    }

    #[test]
    fn face_curve_reports_nonconvergence() {
        let opts = IterationOptions { max_iters: 2, tol: 1e-12 };
        let err = compute_face_curve(&lg_b(), face12(), 16, opts).unwrap_err();
        assert!(matches!(err, SimplexError::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn flat_surface_of_lg_a() {
        let s = compute_surface_at_level(&lg_a(), 32, IterationOptions::default()).unwrap();
        assert_eq!(s.surface.grid.len(), 561);
        assert!(s.surface.iterations <= 300);
        assert!(s.surface.rho.iter().all(|r| (r - 1.0).abs() <= 5e-3));
        assert_eq!(s.boundary_mismatch(), 0.0);
        assert!(unorderedness_check(&s).passed());
    }

    #[test]
    fn lg_b_surface_passes_through_interior_fixed_point() {
        let s = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
        assert!(s.converged());
        let center = SimplexPoint([1.0 / 3.0; 3]);
        let n = (0..s.surface.grid.len())
            .min_by(|&a, &b| s.surface.grid.nodes[a].dist(&center).total_cmp(&s.surface.grid.nodes[b].dist(&center)))
            .unwrap();
        assert!((s.surface.rho[n] - 3.0).abs() <= 2.0 / 32.0 * 3.0);
        assert!((s.surface.radius_at(&center) - 3.0).abs() < 1e-2);
        assert!(unorderedness_check(&s).passed());
        let res = invariance_residual(&lg_b(), &s).unwrap();
        assert!(res <= 2.0 / 32.0, "{res}");
        assert_eq!(s.boundary_mismatch(), 0.0);
    }

    #[test]
    fn exact_plane_is_invariant() {
        let s = compute_surface_at_level(&lg_a(), 16, IterationOptions::default()).unwrap();
        let mut exact = s.clone();
        exact.surface.rho.iter_mut().for_each(|r| *r = 1.0);
        assert!(invariance_residual(&lg_a(), &exact).unwrap() < 1e-9);
    }

    #[test]
    fn perturbed_node_breaks_unorderedness() {
        let mut s = compute_surface_at_level(&lg_b(), 8, IterationOptions::default()).unwrap();
        let n = s.surface.grid.index(3, 3);
        s.surface.rho[n] *= 1.5;
        assert!(!unorderedness_check(&s).passed());
    }

    #[test]
    fn attraction_examples() {
        let s = compute_surface_at_level(&lg_a(), 16, IterationOptions::default()).unwrap();
        let r = attraction_check(&lg_a(), &s, 100, 200, 0).unwrap();
        assert!(r.max_distance < 5e-3 && r.passed, "{r:?}");

        let b = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
        let d = attraction_distances(&lg_b(), &b, &[Point3::new(1.0, 1.0, 1.0)], 0).unwrap();
        assert!(d[0] < 5e-3, "{d:?}");
        let d = attraction_distances(&lg_b(), &b, &[Point3::new(0.3, 0.0, 0.0)], 200).unwrap();
        assert!(d[0] < 1e-9);
    }

    #[test]
    fn refinement_is_consistent() {
        let coarse = compute_surface_at_level(&lg_c(), 16, IterationOptions::default()).unwrap();
        let fine = compute_surface_at_level(&lg_c(), 32, IterationOptions::default()).unwrap();
        for i in 0..=16 {
            for j in 0..=16 - i {
                let a = coarse.surface.rho[coarse.surface.grid.index(i, j)];
                let b = fine.surface.rho[fine.surface.grid.index(2 * i, 2 * j)];
                assert!((a - b).abs() <= 4.0 / 16.0);
            }
        }
    }

    #[test]
    fn iteration_is_deterministic() {
        let a = compute_surface_at_level(&lg_c(), 12, IterationOptions::default()).unwrap();
        let b = compute_surface_at_level(&lg_c(), 12, IterationOptions::default()).unwrap();
        assert_eq!(a.surface.rho, b.surface.rho);
    }

    #[test]
    fn exports() {
        let s = compute_surface_at_level(&lg_a(), 4, IterationOptions::default()).unwrap();
        let csv = surface_csv(&s.surface);
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.starts_with("y1,y2,y3,rho,x1,x2,x3\n"));
        let obj = surface_obj(&s.surface);
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 15);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 16);
        assert!(obj.contains("f 1 "));
        for f in obj.lines().filter(|l| l.starts_with("f ")) {
            assert!(f.split(' ').skip(1).all(|v| v.parse::<usize>().unwrap() >= 1));
        }
    }
}
