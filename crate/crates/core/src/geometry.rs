//! Points and vectors of the octant, species subsets, the probability-simplex
//! grid and radial projection.
//!
//! Radii are measured in the 1-norm: a point `x` in the octant is written as
//! `rho · y` with `y` on the probability simplex and `rho = x1 + x2 + x3`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {0:?} is too close to the origin to project radially")]
    ZeroPoint([f64; 3]),
    #[error("points are not in face {face}: {detail}")]
    FaceMismatch { face: SpeciesSubset, detail: String },
    #[error("grid level {0} outside 1..=1024")]
    LevelOutOfRange(usize),
    #[error("degenerate triangle {index} (area {area:e}) contains the query; the image surface is folded")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("invalid simplex point {0:?}")]
    NotOnSimplex([f64; 3]),
    #[error("empty interpolation source")]
    EmptySource,
}

/// An affine point of `H`; membership in the octant means all coordinates ≥ 0.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3(pub [f64; 3]);

/// A vector of `V`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

macro_rules! index_impls {
    ($t:ty) => {
        impl Index<usize> for $t {
            type Output = f64;
            #[inline]
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
        impl IndexMut<usize> for $t {
            #[inline]
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.0[i]
            }
        }
    };
}
index_impls!(Point3);
index_impls!(Vec3);

impl Point3 {
    pub const ORIGIN: Point3 = Point3([0.0; 3]);

    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Point3([x1, x2, x3])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Membership in the closed octant `C`.
    pub fn in_octant(&self) -> bool {
        self.is_finite() && self.0.iter().all(|&v| v >= 0.0)
    }

    /// Sum of coordinates (the 1-norm on the octant).
    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Position vector `x − 0`.
    pub fn to_vec(self) -> Vec3 {
        Vec3(self.0)
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    /// Smallest face containing the point: coordinates above `tol` are members.
    pub fn support(&self, tol: f64) -> Option<SpeciesSubset> {
        SpeciesSubset::from_mask((0..3).filter(|&i| self.0[i] > tol).fold(0u8, |m, i| m | (1 << i)))
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(v1: f64, v2: f64, v3: f64) -> Self {
        Vec3([v1, v2, v3])
    }

    /// `e_i` for a 0-based species index.
    pub fn basis(i: usize) -> Vec3 {
        let mut v = Vec3::ZERO;
        v.0[i] = 1.0;
        v
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3([self[1] * o[2] - self[2] * o[1], self[2] * o[0] - self[0] * o[2], self[0] * o[1] - self[1] * o[0]])
    }

    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }
}

impl Sub for Point3 {
    type Output = Vec3;
    fn sub(self, rhs: Point3) -> Vec3 {
        Vec3([self[0] - rhs[0], self[1] - rhs[1], self[2] - rhs[2]])
    }
}

impl Add<Vec3> for Point3 {
    type Output = Point3;
    fn add(self, rhs: Vec3) -> Point3 {
        Point3([self[0] + rhs[0], self[1] + rhs[1], self[2] + rhs[2]])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3([self[0] + rhs[0], self[1] + rhs[1], self[2] + rhs[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3([self[0] - rhs[0], self[1] - rhs[1], self[2] - rhs[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self[0] * s, self[1] * s, self[2] * s])
    }
}

/// A nonempty subset `I ⊆ {1, 2, 3}` of species, stored as a bit mask over
/// 0-based indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SpeciesSubset(u8);

impl SpeciesSubset {
    pub const FULL: SpeciesSubset = SpeciesSubset(0b111);
    /// The three planar faces `{1,2}`, `{1,3}`, `{2,3}`.
    pub const PLANAR: [SpeciesSubset; 3] = [SpeciesSubset(0b011), SpeciesSubset(0b101), SpeciesSubset(0b110)];
    pub const AXES: [SpeciesSubset; 3] = [SpeciesSubset(0b001), SpeciesSubset(0b010), SpeciesSubset(0b100)];

    pub fn from_mask(mask: u8) -> Option<Self> {
        (mask != 0 && mask <= 0b111).then_some(SpeciesSubset(mask))
    }

    /// Builds a subset from 1-based species labels, as written in the literature.
    pub fn from_species(labels: &[usize]) -> Option<Self> {
        let mut mask = 0u8;
        for &l in labels {
            if !(1..=3).contains(&l) {
                return None;
            }
            mask |= 1 << (l - 1);
        }
        Self::from_mask(mask)
    }

    pub fn single(index: usize) -> Self {
        SpeciesSubset(1 << index)
    }

    pub fn mask(&self) -> u8 {
        self.0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 3 && self.0 & (1 << index) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based member indices in increasing order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&i| self.contains(i))
    }

    /// `Ī = {1,2,3} \ I`; `None` for the full set.
    pub fn complement(&self) -> Option<SpeciesSubset> {
        Self::from_mask(!self.0 & 0b111)
    }

    /// 1-based labels, e.g. `[1, 2]`.
    pub fn labels(&self) -> Vec<usize> {
        self.members().map(|i| i + 1).collect()
    }

    /// The two members of a planar face, in increasing order.
    pub fn pair(&self) -> Option<(usize, usize)> {
        let mut it = self.members();
        match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => Some((a, b)),
            _ => None,
        }
    }
}

impl fmt::Debug for SpeciesSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for SpeciesSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

impl TryFrom<Vec<usize>> for SpeciesSubset {
    type Error = String;
    fn try_from(v: Vec<usize>) -> Result<Self, String> {
        SpeciesSubset::from_species(&v).ok_or_else(|| format!("invalid species subset {v:?}"))
    }
}

impl From<SpeciesSubset> for Vec<usize> {
    fn from(s: SpeciesSubset) -> Vec<usize> {
        s.labels()
    }
}

/// Barycentric coordinates of a point of the probability simplex `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint(pub [f64; 3]);

impl SimplexPoint {
    pub fn new(y: [f64; 3]) -> Result<Self, GeometryError> {
        let sum: f64 = y.iter().sum();
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(GeometryError::NotOnSimplex(y));
        }
        Ok(SimplexPoint(y))
    }

    /// Point `rho · y` of the octant.
    pub fn scaled(&self, rho: f64) -> Point3 {
        Point3([self.0[0] * rho, self.0[1] * rho, self.0[2] * rho])
    }

    pub fn dist(&self, other: &SimplexPoint) -> f64 {
        (0..3).map(|i| (self.0[i] - other.0[i]).powi(2)).sum::<f64>().sqrt()
    }
}

impl Index<usize> for SimplexPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Radial projection `x ↦ (x / Σx, Σx)` onto `Δ`.
pub fn radial_project(x: Point3) -> Result<(SimplexPoint, f64), GeometryError> {
    if x.0.iter().all(|&v| v <= 1e-300) || !x.is_finite() {
        return Err(GeometryError::ZeroPoint(x.0));
    }
    let c = x.0.map(|v| v.max(0.0));
    let rho: f64 = c.iter().sum();
    Ok((SimplexPoint(c.map(|v| v / rho)), rho))
}

/// Outcome of comparing two points of a face under the orders `≤_I`, `<_I`, `≪_I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderRelation {
    Equal,
    /// `p <_I q` but not `p ≪_I q`.
    LeqStrictSomewhere,
    /// `p ≪_I q`.
    AllStrict,
    Incomparable,
}

/// Compares `p` against `q` in the order of face `I`. Only the direction
/// `p ≤ q` is reported; call with swapped arguments for the reverse.
pub fn order_compare(p: Point3, q: Point3, face: SpeciesSubset) -> Result<OrderRelation, GeometryError> {
    for (name, pt) in [("p", p), ("q", q)] {
        if let Some(outside) = face.complement() {
            if let Some(j) = outside.members().find(|&j| pt[j].abs() > 1e-12) {
                return Err(GeometryError::FaceMismatch {
                    face,
                    detail: format!("{name} has coordinate {} = {}", j + 1, pt[j]),
                });
            }
        }
    }
    let mut all_leq = true;
    let mut all_strict = true;
    let mut any_strict = false;
    for i in face.members() {
        if p[i] > q[i] {
            all_leq = false;
        }
        if p[i] < q[i] {
            any_strict = true;
        } else {
            all_strict = false;
        }
    }
    Ok(match (all_leq, any_strict, all_strict) {
        (true, _, true) => OrderRelation::AllStrict,
        (true, true, false) => OrderRelation::LeqStrictSomewhere,
        (true, false, _) => OrderRelation::Equal,
        (false, ..) => OrderRelation::Incomparable,
    })
}

/// Uniform triangulation of `Δ` with nodes `(i/L, j/L, k/L)`, `i + j + k = L`.
///
/// Nodes are ordered lexicographically in `(i, j)`. Triangles are oriented
/// counter-clockwise in the `(y1, y2)` chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrid {
    pub level: usize,
    pub nodes: Vec<SimplexPoint>,
    pub triangles: Vec<[usize; 3]>,
    /// Smallest face of `Δ` containing each node.
    pub faces: Vec<SpeciesSubset>,
}

pub fn make_grid(level: usize) -> Result<DeltaGrid, GeometryError> {
    if !(1..=1024).contains(&level) {
        return Err(GeometryError::LevelOutOfRange(level));
    }
    let l = level as f64;
    let mut nodes = Vec::with_capacity((level + 1) * (level + 2) / 2);
    let mut faces = Vec::with_capacity(nodes.capacity());
    for i in 0..=level {
        for j in 0..=level - i {
            let k = level - i - j;
            nodes.push(SimplexPoint([i as f64 / l, j as f64 / l, k as f64 / l]));
            let mask = [i, j, k].iter().enumerate().filter(|(_, &c)| c > 0).fold(0u8, |m, (s, _)| m | (1 << s));
            faces.push(SpeciesSubset(mask));
        }
    }
    let grid_index = |i: usize, j: usize| node_index(level, i, j);
    let mut triangles = Vec::with_capacity(level * level);
    for i in 0..level {
        for j in 0..level - i {
            triangles.push([grid_index(i, j), grid_index(i + 1, j), grid_index(i, j + 1)]);
            if i + j + 2 <= level {
                triangles.push([grid_index(i + 1, j), grid_index(i + 1, j + 1), grid_index(i, j + 1)]);
            }
        }
    }
    Ok(DeltaGrid { level, nodes, triangles, faces })
}

#[inline]
fn node_index(level: usize, i: usize, j: usize) -> usize {
    i * (level + 1) - i * i.saturating_sub(1) / 2 + j
}

impl DeltaGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of node `(i/L, j/L, 1 − (i+j)/L)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= self.level);
        node_index(self.level, i, j)
    }

    /// Integer coordinates `(i, j, k)` of a node.
    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let y = self.nodes[n].0;
        let l = self.level as f64;
        let i = (y[0] * l).round() as usize;
        let j = (y[1] * l).round() as usize;
        (i, j, self.level - i - j)
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        self.faces[n].len() < 3
    }

    /// Nodes lying on the closed edge `Δ_I` of a planar face, ordered from the
    /// lower-indexed species' vertex towards the higher one.
    pub fn face_nodes(&self, face: SpeciesSubset) -> Vec<usize> {
        let Some((a, b)) = face.pair() else { return Vec::new() };
        let l = self.level;
        (0..=l)
            .map(|m| {
                // Node with y_a = (L − m)/L, y_b = m/L.
                let mut ijk = [0usize; 3];
                ijk[a] = l - m;
                ijk[b] = m;
                node_index(l, ijk[0], ijk[1])
            })
            .collect()
    }

    /// Locates `y` in the structured triangulation. Returns the triangle's node
    /// indices and barycentric weights (non-negative, summing to one).
    pub fn locate(&self, y: &SimplexPoint) -> ([usize; 3], [f64; 3]) {
        let l = self.level;
        let lf = l as f64;
        let a = (y[0] * lf).clamp(0.0, lf);
        let b = (y[1] * lf).clamp(0.0, lf);
        let i = (a.floor() as usize).min(l - 1);
        let j = (b.floor() as usize).min(l - 1 - i);
        let fa = a - i as f64;
        let fb = b - j as f64;
        let (tri, w) = if fa + fb > 1.0 && i + j + 2 <= l {
            (
                [node_index(l, i + 1, j), node_index(l, i + 1, j + 1), node_index(l, i, j + 1)],
                [1.0 - fb, fa + fb - 1.0, 1.0 - fa],
            )
        } else {
            ([node_index(l, i, j), node_index(l, i + 1, j), node_index(l, i, j + 1)], [1.0 - fa - fb, fa, fb])
        };
        let w = w.map(|v| v.max(0.0));
        let s: f64 = w.iter().sum();
        (tri, w.map(|v| v / s))
    }

    /// Grid edges `(a, b)` with `a < b`, each listed once.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// A star-shaped surface `{rho(y) · y : y ∈ Δ}` sampled on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGraph {
    pub grid: DeltaGrid,
    pub rho: Vec<f64>,
    pub iterations: usize,
    pub last_update: f64,
}

impl RadialGraph {
    pub fn new(grid: DeltaGrid, rho: Vec<f64>) -> Self {
        assert_eq!(grid.len(), rho.len());
        RadialGraph { grid, rho, iterations: 0, last_update: f64::NAN }
    }

    /// Builds a graph from a radius function of the direction.
    pub fn from_fn(grid: DeltaGrid, f: impl Fn(&SimplexPoint) -> f64) -> Self {
        let rho = grid.nodes.iter().map(&f).collect();
        RadialGraph::new(grid, rho)
    }

    pub fn point(&self, n: usize) -> Point3 {
        self.grid.nodes[n].scaled(self.rho[n])
    }

    pub fn points(&self) -> Vec<Point3> {
        (0..self.rho.len()).map(|n| self.point(n)).collect()
    }

    /// Radius at `y` by linear interpolation of `rho` over the grid triangle.
    pub fn radius_at(&self, y: &SimplexPoint) -> f64 {
        let (tri, w) = self.grid.locate(y);
        (0..3).map(|k| w[k] * self.rho[tri[k]]).sum()
    }

    /// Radius at `y` on the polyhedral surface through the node points: the
    /// triangle through three surface points is flat, which makes `1/rho`
    /// affine on it.
    pub fn facet_radius_at(&self, y: &SimplexPoint) -> f64 {
        let (tri, w) = self.grid.locate(y);
        1.0 / (0..3).map(|k| w[k] / self.rho[tri[k]]).sum::<f64>()
    }

    pub fn mean_radius(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }

    /// Grid spacing `1/L` of the underlying grid.
    pub fn spacing(&self) -> f64 {
        1.0 / self.grid.level as f64
    }
}

/// Result of re-gridding from a pushed-forward triangulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interpolated {
    pub radius: f64,
    pub extrapolated: bool,
}

/// Piecewise-linear radius interpolation over an arbitrary triangulation of
/// points of `Δ`, with a bucket index for point location.
pub struct PushforwardInterpolator<'a> {
    src: &'a [(SimplexPoint, f64)],
    triangles: &'a [[usize; 3]],
    buckets: Vec<Vec<u32>>,
    nb: usize,
}

const BARY_TOL: f64 = 1e-10;
const MIN_AREA: f64 = 1e-14;

/// Twice the signed area of `(a, b, c)` in the `(y1, y2)` chart.
#[inline]
fn signed_area2(a: &SimplexPoint, b: &SimplexPoint, c: &SimplexPoint) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl<'a> PushforwardInterpolator<'a> {
    pub fn new(src: &'a [(SimplexPoint, f64)], triangles: &'a [[usize; 3]]) -> Result<Self, GeometryError> {
        if src.is_empty() {
            return Err(GeometryError::EmptySource);
        }
        let nb = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let mut buckets = vec![Vec::new(); nb * nb];
        let cell = |v: f64| ((v * nb as f64).floor().max(0.0) as usize).min(nb - 1);
        for (t, tri) in triangles.iter().enumerate() {
            let ys = tri.map(|k| src[k].0);
            let (mut lo0, mut hi0, mut lo1, mut hi1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for y in &ys {
                lo0 = lo0.min(y[0]);
                hi0 = hi0.max(y[0]);
                lo1 = lo1.min(y[1]);
                hi1 = hi1.max(y[1]);
            }
            for bi in cell(lo0 - BARY_TOL)..=cell(hi0 + BARY_TOL) {
                for bj in cell(lo1 - BARY_TOL)..=cell(hi1 + BARY_TOL) {
                    buckets[bi * nb + bj].push(t as u32);
                }
            }
        }
        Ok(PushforwardInterpolator { src, triangles, buckets, nb })
    }

    /// Interpolated radius at `query`; falls back to the nearest source point
    /// outside the triangulation.
    pub fn eval(&self, query: &SimplexPoint) -> Result<Interpolated, GeometryError> {
        let nb = self.nb;
        let cell = |v: f64| ((v * nb as f64).floor().max(0.0) as usize).min(nb - 1);
        for &t in &self.buckets[cell(query[0]) * nb + cell(query[1])] {
            let tri = self.triangles[t as usize];
            let [a, b, c] = tri.map(|k| &self.src[k].0);
            let area = signed_area2(a, b, c);
            let wa = signed_area2(query, b, c);
            let wb = signed_area2(a, query, c);
            let wc = signed_area2(a, b, query);
            if area.abs() < 2.0 * MIN_AREA {
                // A collapsed triangle only matters if it is the one containing the query.
                let (lo0, hi0) = minmax([a[0], b[0], c[0]]);
                let (lo1, hi1) = minmax([a[1], b[1], c[1]]);
                if (lo0 - BARY_TOL..=hi0 + BARY_TOL).contains(&query[0])
                    && (lo1 - BARY_TOL..=hi1 + BARY_TOL).contains(&query[1])
                    && wa.abs() + wb.abs() + wc.abs() <= area.abs() + 4.0 * MIN_AREA
                {
                    return Err(GeometryError::DegenerateTriangle { index: t as usize, area: area.abs() / 2.0 });
                }
                continue;
            }
            let (wa, wb, wc) = (wa / area, wb / area, wc / area);
            if wa >= -BARY_TOL && wb >= -BARY_TOL && wc >= -BARY_TOL {
                let radius = wa * self.src[tri[0]].1 + wb * self.src[tri[1]].1 + wc * self.src[tri[2]].1;
                return Ok(Interpolated { radius, extrapolated: false });
            }
        }
        let nearest =
            self.src.iter().min_by(|p, q| p.0.dist(query).total_cmp(&q.0.dist(query))).expect("non-empty source");
        Ok(Interpolated { radius: nearest.1, extrapolated: true })
    }

    /// Signed areas (in the `(y1, y2)` chart) of every source triangle.
    pub fn signed_areas(&self) -> impl Iterator<Item = f64> + '_ {
        self.triangles.iter().map(|t| {
            let [a, b, c] = t.map(|k| &self.src[k].0);
            signed_area2(a, b, c) / 2.0
        })
    }
}

fn minmax(v: [f64; 3]) -> (f64, f64) {
    (v[0].min(v[1]).min(v[2]), v[0].max(v[1]).max(v[2]))
}

/// One-shot form of [`PushforwardInterpolator::eval`].
pub fn interpolate_pushforward(
    src: &[(SimplexPoint, f64)],
    triangles: &[[usize; 3]],
    query: &SimplexPoint,
) -> Result<Interpolated, GeometryError> {
    PushforwardInterpolator::new(src, triangles)?.eval(query)
}
