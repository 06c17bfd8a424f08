//! Convexity of the radial body `Γ = {t x : t ∈ [0, 1], x ∈ S}`.
//!
//! Two independent tests. The midpoint test compares midpoints of pairs of
//! surface points radially against the polyhedral surface through the node
//! points. The hull test computes, along each node direction, the radius of
//! the convex hull of the node points and the origin, and reports by how much
//! the surface falls short of it.
//!
//! Along a ray `y`, the hull radius is `1 / g(y)` where `g` is the lower
//! convex envelope of the data `(y_k, 1/rho_k)`: a convex combination
//! `t y = Σ λ_k rho_k y_k` with `Σ λ_k ≤ 1` reaches `t = 1 / Σ μ_k / rho_k`
//! for `μ_k = λ_k rho_k / t`. The envelope is evaluated by a small linear
//! program per direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{radial_project, GeometryError, Point3, RadialGraph, SimplexPoint, Vec3};
use crate::linalg::Matrix3;
use crate::simplex::SimplexApproximation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexityError {
    #[error("surface not converged: last step {step:e} exceeds 10 x tol {tol:e}")]
    UnconvergedSurface { step: f64, tol: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("hull linear program failed at direction {0:?}")]
    HullSolve([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvexityMethod {
    MidpointGraph,
    HullDeviation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvexityVerdict {
    Convex,
    Nonconvex,
    Marginal,
}

impl ConvexityVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConvexityVerdict::Convex => "Convex",
            ConvexityVerdict::Nonconvex => "Nonconvex",
            ConvexityVerdict::Marginal => "Marginal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityOptions {
    /// Violation tolerance; `None` uses [`default_tol_c`].
    pub tol_c: Option<f64>,
    /// Random long-range pairs on top of the local pairs.
    pub pair_budget: usize,
    pub seed: u64,
    /// Restrict midpoint pairs to directions within this distance of `∂Δ`.
    pub boundary_band: Option<f64>,
    /// Smallest direction separation of the pairs entering the depth margin.
    pub margin_separation: f64,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        ConvexityOptions { tol_c: None, pair_budget: 2000, seed: 0, boundary_band: None, margin_separation: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub method: ConvexityMethod,
    /// Largest radial excess of a chord midpoint (or hull point) over the
    /// surface; positive values witness nonconvexity.
    pub worst_violation: f64,
    /// Direction of the worst violation.
    pub worst_direction: [f64; 3],
    /// Convexity modulus: smallest depth `s − r` of the midpoint of a
    /// well-separated pair below the reference surface `s`, divided by the
    /// squared separation of the pair's directions. About `κ ρ² / 8` for a
    /// body of least curvature `κ`; zero for flat bodies, negative when
    /// some long chord leaves the body.
    pub margin: f64,
    pub verdict: ConvexityVerdict,
    pub tol_c: f64,
    pub level: usize,
    pub spacing: f64,
    pub samples: usize,
    pub margin_pairs: usize,
}

impl ConvexityReport {
    /// Convex verdict whose convexity modulus exceeds two grid spacings.
    pub fn convex_with_margin(&self) -> bool {
        self.verdict == ConvexityVerdict::Convex && self.margin > 2.0 * self.spacing
    }
}

/// Violation tolerance scaled to the interpolation error of the grid:
/// `h² · mean radius`, with a floor well above round-off.
pub fn default_tol_c(surface: &RadialGraph) -> f64 {
    let h = surface.spacing();
    (h * h * surface.mean_radius()).max(1e-7)
}

fn verdict(worst: f64, tol_c: f64) -> ConvexityVerdict {
    if worst <= tol_c {
        ConvexityVerdict::Convex
    } else if worst > 2.0 * tol_c {
        ConvexityVerdict::Nonconvex
    } else {
        ConvexityVerdict::Marginal
    }
}

fn check_converged(approx: &SimplexApproximation) -> Result<(), ConvexityError> {
    if approx.hausdorff_step > 10.0 * approx.opts.tol {
        return Err(ConvexityError::UnconvergedSurface { step: approx.hausdorff_step, tol: approx.opts.tol });
    }
    Ok(())
}

pub fn convexity_midpoint_test(
    approx: &SimplexApproximation,
    opts: &ConvexityOptions,
) -> Result<ConvexityReport, ConvexityError> {
    check_converged(approx)?;
    midpoint_test_graph(&approx.surface, opts)
}

pub fn convexity_hull_test(
    approx: &SimplexApproximation,
    opts: &ConvexityOptions,
) -> Result<ConvexityReport, ConvexityError> {
    check_converged(approx)?;
    hull_test_graph(&approx.surface, opts)
}

/// Grid edges and second neighbours along the three lattice directions.
/// The midpoint of a second-neighbour pair is a node, so these pairs test the
/// node points directly. Opposite vertices of adjacent triangles are left out:
/// whether a fixed triangulation edge is reflex on a convex surface is
/// decided at the `h²` scale and would only add noise.
fn local_pairs(surface: &RadialGraph) -> Vec<(usize, usize)> {
    let grid = &surface.grid;
    let l = grid.level;
    let mut pairs = grid.edges();
    for i in 0..=l {
        for j in 0..=l - i {
            let n = grid.index(i, j);
            if i + j + 2 <= l {
                pairs.push((n, grid.index(i + 2, j)));
                pairs.push((n, grid.index(i, j + 2)));
            }
            if j >= 2 && i + 2 + j - 2 <= l {
                pairs.push((n, grid.index(i + 2, j - 2)));
            }
        }
    }
    pairs
}

fn random_pairs(n: usize, budget: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::mix_seed(seed, 0xC0_4E3));
    (0..budget)
        .filter_map(|_| {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            (a != b).then_some((a, b))
        })
        .collect()
}

fn near_boundary(y: &SimplexPoint, band: f64) -> bool {
    y.0.iter().any(|&v| v <= band)
}

fn midpoint(p: Point3, q: Point3) -> Point3 {
    Point3(std::array::from_fn(|i| 0.5 * (p[i] + q[i])))
}

/// Largest value and its index; ties keep the first.
fn arg_max(values: &[f64]) -> Option<(usize, f64)> {
    values.iter().copied().enumerate().fold(None, |best, (k, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((k, v)),
    })
}

/// Smallest depth `s − r` of midpoints of well-separated random pairs below
/// the reference radius `s`, divided by the squared direction separation.
fn depth_margin(
    surface: &RadialGraph,
    opts: &ConvexityOptions,
    reference: &(dyn Fn(&SimplexPoint) -> Result<f64, ConvexityError> + Sync),
) -> Result<(f64, usize), ConvexityError> {
    let nodes = &surface.grid.nodes;
    let pairs: Vec<(usize, usize)> = random_pairs(nodes.len(), opts.pair_budget, opts.seed ^ 0x5EED)
        .into_iter()
        .filter(|&(a, b)| nodes[a].dist(&nodes[b]) >= opts.margin_separation)
        .collect();
    let depths: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (y, r) = radial_project(midpoint(surface.point(a), surface.point(b)))?;
            let s = reference(&y)?;
            let d = nodes[a].dist(&nodes[b]);
            Ok((s - r) / (d * d))
        })
        .collect::<Result<_, ConvexityError>>()?;
    Ok((depths.iter().copied().fold(f64::INFINITY, f64::min), pairs.len()))
}

/// Midpoint test on any radial graph.
pub fn midpoint_test_graph(surface: &RadialGraph, opts: &ConvexityOptions) -> Result<ConvexityReport, ConvexityError> {
    let nodes = &surface.grid.nodes;
    let mut pairs = local_pairs(surface);
    pairs.extend(random_pairs(nodes.len(), opts.pair_budget, opts.seed));
    if let Some(band) = opts.boundary_band {
        pairs.retain(|&(a, b)| near_boundary(&nodes[a], band) && near_boundary(&nodes[b], band));
    }
    let evaluated: Vec<(f64, [f64; 3])> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (y, r) = radial_project(midpoint(surface.point(a), surface.point(b)))?;
            Ok((r - surface.facet_radius_at(&y), y.0))
        })
        .collect::<Result<_, ConvexityError>>()?;
    let violations: Vec<f64> = evaluated.iter().map(|v| v.0).collect();
    let (k, worst) = arg_max(&violations).unwrap_or((0, f64::NEG_INFINITY));
    let worst_direction = evaluated.get(k).map(|v| v.1).unwrap_or([f64::NAN; 3]);
    let (margin, margin_pairs) = depth_margin(surface, opts, &|y| Ok(surface.facet_radius_at(y)))?;
    let tol_c = opts.tol_c.unwrap_or_else(|| default_tol_c(surface));
    Ok(ConvexityReport {
        method: ConvexityMethod::MidpointGraph,
        worst_violation: worst,
        worst_direction,
        margin,
        verdict: verdict(worst, tol_c),
        tol_c,
        level: surface.grid.level,
        spacing: surface.spacing(),
        samples: pairs.len(),
        margin_pairs,
    })
}

/// Lower convex envelope of `(y_k, sigma_k)` over `Δ`, evaluated by a
/// revised simplex method on `min Σ μ_k σ_k, Σ μ_k y_k = y, μ ≥ 0`.
pub struct LowerEnvelope<'a> {
    ys: &'a [SimplexPoint],
    sigma: Vec<f64>,
    corners: [usize; 3],
}

impl<'a> LowerEnvelope<'a> {
    /// `corners[i]` must index the data point at vertex `e_i`.
    pub fn new(ys: &'a [SimplexPoint], sigma: Vec<f64>, corners: [usize; 3]) -> Self {
        LowerEnvelope { ys, sigma, corners }
    }

    pub fn eval(&self, y: &SimplexPoint) -> Option<f64> {
        const EPS: f64 = 1e-13;
        let col = |k: usize| Vec3(self.ys[k].0);
        let mut basis = self.corners;
        let mut x = Vec3(y.0);
        for iter in 0..2000 {
            let b = Matrix3::from_rows(std::array::from_fn(|r| std::array::from_fn(|c| self.ys[basis[c]][r])));
            let c_b = Vec3(basis.map(|k| self.sigma[k]));
            let pi = b.transpose().solve(c_b)?;
            let scale = 1.0 + pi.norm();
            // Dantzig pricing, Bland's rule once cycling becomes possible.
            let mut entering = None;
            let mut best = -EPS * scale;
            for k in 0..self.ys.len() {
                let d = self.sigma[k] - pi.dot(&col(k));
                if d < best {
                    entering = Some(k);
                    if iter >= 50 {
                        break;
                    }
                    best = d;
                }
            }
            let Some(k) = entering else {
                return Some(c_b.dot(&x));
            };
            let u = b.solve(col(k))?;
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for r in 0..3 {
                if u[r] > 1e-12 {
                    let t = x[r].max(0.0) / u[r];
                    if t < ratio - 1e-15 || (t <= ratio + 1e-15 && leave.is_some_and(|l: usize| basis[r] < basis[l])) {
                        ratio = t;
                        leave = Some(r);
                    }
                }
            }
            let r = leave?;
            for s in 0..3 {
                x[s] -= ratio * u[s];
            }
            x[r] = ratio;
            basis[r] = k;
        }
        None
    }
}

fn corner_nodes(surface: &RadialGraph) -> [usize; 3] {
    let l = surface.grid.level;
    [surface.grid.index(l, 0), surface.grid.index(0, l), surface.grid.index(0, 0)]
}

/// Hull test on any radial graph: the worst radial deficiency of a node
/// below the convex hull of all node points and the origin.
pub fn hull_test_graph(surface: &RadialGraph, opts: &ConvexityOptions) -> Result<ConvexityReport, ConvexityError> {
    let nodes = &surface.grid.nodes;
    let env = LowerEnvelope::new(nodes, surface.rho.iter().map(|r| 1.0 / r).collect(), corner_nodes(surface));
    let hull_radius = |y: &SimplexPoint| -> Result<f64, ConvexityError> {
        env.eval(y).filter(|g| *g > 0.0).map(|g| 1.0 / g).ok_or(ConvexityError::HullSolve(y.0))
    };
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    if let Some(band) = opts.boundary_band {
        idx.retain(|&n| near_boundary(&nodes[n], band));
    }
    let deficiency: Vec<f64> =
        idx.par_iter().map(|&n| Ok(hull_radius(&nodes[n])? - surface.rho[n])).collect::<Result<_, ConvexityError>>()?;
    let (k, worst) = arg_max(&deficiency).unwrap_or((0, f64::NEG_INFINITY));
    let worst_direction = idx.get(k).map(|&n| nodes[n].0).unwrap_or([f64::NAN; 3]);
    let (margin, margin_pairs) = depth_margin(surface, opts, &hull_radius)?;
    let tol_c = opts.tol_c.unwrap_or_else(|| default_tol_c(surface));
    Ok(ConvexityReport {
        method: ConvexityMethod::HullDeviation,
        worst_violation: worst,
        worst_direction,
        margin,
        verdict: verdict(worst, tol_c),
        tol_c,
        level: surface.grid.level,
        spacing: surface.spacing(),
        samples: idx.len(),
        margin_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;
    use crate::models::fixtures::*;
    use crate::simplex::{compute_surface_at_level, IterationOptions};

    fn sphere(level: usize) -> RadialGraph {
        RadialGraph::from_fn(make_grid(level).unwrap(), |y| 1.0 / Vec3(y.0).norm())
    }

    fn both(surface: &RadialGraph) -> (ConvexityReport, ConvexityReport) {
        let o = ConvexityOptions::default();
        (midpoint_test_graph(surface, &o).unwrap(), hull_test_graph(surface, &o).unwrap())
    }

    #[test]
    fn flat_surface_is_convex() {
        let flat = RadialGraph::from_fn(make_grid(16).unwrap(), |_| 1.0);
        let (m, h) = both(&flat);
        assert!(m.worst_violation <= 1e-12 && h.worst_violation.abs() <= 1e-12, "{m:?} {h:?}");
        assert_eq!(m.verdict, ConvexityVerdict::Convex);
        assert_eq!(h.verdict, ConvexityVerdict::Convex);
        assert!(m.margin.abs() < 1e-12 && !m.convex_with_margin());
    }

    #[test]
    fn sphere_patch_is_convex() {
        let (m, h) = both(&sphere(32));
        assert_eq!(m.verdict, ConvexityVerdict::Convex, "{m:?}");
        assert_eq!(h.verdict, ConvexityVerdict::Convex, "{h:?}");
        assert!(m.margin > 0.0 && h.margin >= m.margin - 1e-12);
    }

    #[test]
    fn hull_radius_matches_sphere_between_nodes() {
        // The hull of points on a sphere lies inside the ball: hull radius ≤ 1/‖y‖₂.
        let s = sphere(8);
        let env = LowerEnvelope::new(&s.grid.nodes, s.rho.iter().map(|r| 1.0 / r).collect(), corner_nodes(&s));
        for y in [[0.3, 0.3, 0.4], [0.05, 0.9, 0.05], [0.5, 0.5, 0.0]] {
            let y = SimplexPoint(y);
            let hr = 1.0 / env.eval(&y).unwrap();
            assert!(hr <= 1.0 / Vec3(y.0).norm() + 1e-12);
            assert!(hr >= s.facet_radius_at(&y) - 1e-12);
        }
        for n in 0..s.grid.len() {
            let hr = 1.0 / env.eval(&s.grid.nodes[n]).unwrap();
            assert!((hr - s.rho[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn dented_surface_is_nonconvex() {
        let mut s = sphere(16);
        let n = s.grid.index(5, 5);
        s.rho[n] *= 0.9;
        let (m, h) = both(&s);
        assert_eq!(m.verdict, ConvexityVerdict::Nonconvex);
        assert_eq!(h.verdict, ConvexityVerdict::Nonconvex);
        assert_eq!(h.worst_direction, s.grid.nodes[n].0);
    }

    #[test]
    fn noise_is_never_nonconvex() {
        let mut s = sphere(32);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for r in s.rho.iter_mut() {
            *r += 1e-8 * (rng.random::<f64>() - 0.5);
        }
        let (m, h) = both(&s);
        assert_ne!(m.verdict, ConvexityVerdict::Nonconvex);
        assert_ne!(h.verdict, ConvexityVerdict::Nonconvex);
    }

    #[test]
    fn model_surfaces() {
        let a = compute_surface_at_level(&lg_a(), 32, IterationOptions::default()).unwrap();
        let o = ConvexityOptions::default();
        let m = convexity_midpoint_test(&a, &o).unwrap();
        assert!(m.worst_violation <= 1e-6 && m.verdict == ConvexityVerdict::Convex, "{m:?}");
        assert_eq!(convexity_hull_test(&a, &o).unwrap().verdict, ConvexityVerdict::Convex);

        let b = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
        let m = convexity_midpoint_test(&b, &o).unwrap();
        let h = convexity_hull_test(&b, &o).unwrap();
        assert_eq!(m.verdict, ConvexityVerdict::Convex, "{m:?}");
        assert_eq!(h.verdict, ConvexityVerdict::Convex, "{h:?}");

        let c = compute_surface_at_level(&lg_c(), 32, IterationOptions::default()).unwrap();
        let m = convexity_midpoint_test(&c, &o).unwrap();
        let h = convexity_hull_test(&c, &o).unwrap();
        assert_eq!(m.verdict, ConvexityVerdict::Nonconvex);
        assert_eq!(h.verdict, ConvexityVerdict::Nonconvex);
    }

    #[test]
    fn boundary_band_restricts_pairs() {
        let s = sphere(16);
        let band = ConvexityOptions { boundary_band: Some(0.1), ..Default::default() };
        let all = midpoint_test_graph(&s, &ConvexityOptions::default()).unwrap();
        let near = midpoint_test_graph(&s, &band).unwrap();
        assert!(near.samples < all.samples && near.samples > 0);
    }

    #[test]
    fn unconverged_surface_is_rejected() {
        let mut a = compute_surface_at_level(&lg_a(), 8, IterationOptions::default()).unwrap();
        a.hausdorff_step = 1.0;
        let err = convexity_midpoint_test(&a, &ConvexityOptions::default()).unwrap_err();
        assert!(matches!(err, ConvexityError::UnconvergedSurface { .. }));
    }
}
