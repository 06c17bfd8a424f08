//! Exponential separation along face orbits: the Perron-type direction
//! `v_r` against the face-curve tangent `v_w` under chained Jacobians.
//!
//! With fixed proxy vectors, `J_n v_r` turns towards the dominant tangent
//! direction and the plain norm ratio `‖J_n v_r‖ / ‖J_n v_w‖` levels off. The
//! default measure removes the component of `J_n v_r` along `J_n v_w` first:
//! `|det[J_n v_r, J_n v_w]| / ‖J_n v_w‖²`, accumulated from `log|det J|` and
//! renormalised log-norms of `J_n v_w`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, SpeciesSubset};
use crate::linalg::Matrix2;
use crate::models::{MapModel, ModelError};
use crate::simplex::FaceCurve;
use crate::spectra::{find_planar_fixed_points, SpectraError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeparationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("face {0} is not planar")]
    NotPlanar(SpeciesSubset),
    #[error("orbit start {0:?} is a fixed point")]
    OrbitHitsFixedPoint([f64; 3]),
    #[error("propagated vector collapsed (log-norm {0})")]
    Underflow(f64),
    #[error("n_max = {0} is below 10")]
    ShortSeries(usize),
    #[error("face curve has fewer than 3 nodes")]
    ShortCurve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMeasure {
    AreaRatio,
    NormRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationOptions {
    pub n_max: usize,
    pub measure: SeparationMeasure,
    /// Explicit orbit start on the face; otherwise a face-curve node near the
    /// middle of the curve that is not a fixed point.
    pub start: Option<Point3>,
    /// Face-coordinate override of `v_w` (defaults to the curve tangent).
    pub v_w: Option<[f64; 2]>,
    /// Face-coordinate override of `v_r` (defaults to `(1, 1)/√2`).
    pub v_r: Option<[f64; 2]>,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions { n_max: 60, measure: SeparationMeasure::AreaRatio, start: None, v_w: None, v_r: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationFit {
    pub face: SpeciesSubset,
    pub measure: SeparationMeasure,
    pub start: Point3,
    pub v_r: [f64; 2],
    pub v_w: [f64; 2],
    pub n_max: usize,
    /// Log-ratio for `n = 1..=n_max`.
    pub series: Vec<f64>,
    pub nu_hat: f64,
    pub intercept: f64,
    /// Coefficient of determination of the linear fit.
    pub r_squared: f64,
}

const FIXED_DIST: f64 = 1e-6;

fn unit2(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// Least squares `s_n ≈ c − nu n` over `n = 1..`; returns `(nu, c, R²)`.
pub fn fit_decay(series: &[f64]) -> (f64, f64, f64) {
    let n = series.len() as f64;
    let xs: Vec<f64> = (1..=series.len()).map(|k| k as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = series.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(series).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let c = my - slope * mx;
    let ss_tot: f64 = series.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(series).map(|(x, y)| (y - c - slope * x).powi(2)).sum();
    let r2 = if ss_tot <= 1e-24 * (1.0 + my * my) { 1.0 } else { 1.0 - ss_res / ss_tot };
    (-slope, c, r2)
}

pub fn exp_separation_diagnostic(
    model: &MapModel,
    curve: &FaceCurve,
    opts: &SeparationOptions,
) -> Result<SeparationFit, SeparationError> {
    let face = curve.face;
    let (a, b) = face.pair().ok_or(SeparationError::NotPlanar(face))?;
    if opts.n_max < 10 {
        return Err(SeparationError::ShortSeries(opts.n_max));
    }
    let l = curve.level();
    if l < 2 {
        return Err(SeparationError::ShortCurve);
    }
    let tangent = |k: usize| {
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(l));
        let d = curve.point(hi) - curve.point(lo);
        unit2([d[a], d[b]])
    };
    let (start, default_w) = match opts.start {
        Some(x) => {
            // Tangent of the curve node nearest the start direction.
            let t = x[b] / (x[a] + x[b]);
            let k = ((t * l as f64).round() as usize).clamp(1, l - 1);
            (x, tangent(k))
        }
        None => {
            let fixed = find_planar_fixed_points(model, face)?.points;
            let mut order: Vec<usize> = (1..l).collect();
            order.sort_by_key(|&k| (2 * k).abs_diff(l));
            let k = order
                .into_iter()
                .find(|&k| fixed.iter().all(|f| f.location.dist(&curve.point(k)) > FIXED_DIST))
                .ok_or(SeparationError::ShortCurve)?;
            (curve.point(k), tangent(k))
        }
    };
    if (model.eval(start)? - start).norm() < 1e-14 && opts.start.is_none() {
        return Err(SeparationError::OrbitHitsFixedPoint(start.0));
    }
    let v_r = unit2(opts.v_r.unwrap_or([1.0, 1.0]));
    let v_w = unit2(opts.v_w.unwrap_or(default_w));
    let mut x = start;
    let mut vr = v_r;
    let mut vw = v_w;
    let (mut log_r, mut log_w) = (0.0, 0.0);
    let mut log_det = (v_r[0] * v_w[1] - v_r[1] * v_w[0]).abs().ln();
    let mut series = Vec::with_capacity(opts.n_max);
    for _ in 0..opts.n_max {
        let j = model.jacobian_unchecked(x)?;
        let block: Matrix2 = j.block2(a, b);
        log_det += block.det().abs().ln();
        let step = |v: [f64; 2], acc: &mut f64| -> Result<[f64; 2], SeparationError> {
            let u = block.mul_vec(v);
            let n = u[0].hypot(u[1]);
            if !(n > 1e-280) || !n.is_finite() {
                return Err(SeparationError::Underflow(*acc + n.ln()));
            }
            *acc += n.ln();
            Ok([u[0] / n, u[1] / n])
        };
        vr = step(vr, &mut log_r)?;
        vw = step(vw, &mut log_w)?;
        series.push(match opts.measure {
            SeparationMeasure::AreaRatio => log_det - 2.0 * log_w,
            SeparationMeasure::NormRatio => log_r - log_w,
        });
        x = model.eval(x)?;
    }
    if series.iter().any(|s| !s.is_finite()) {
        return Err(SeparationError::Underflow(f64::NEG_INFINITY));
    }
    let (nu_hat, intercept, r_squared) = fit_decay(&series);
    Ok(SeparationFit {
        face,
        measure: opts.measure,
        start,
        v_r,
        v_w,
        n_max: opts.n_max,
        series,
        nu_hat,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::*;
    use crate::simplex::{compute_face_curve, IterationOptions};

    fn curve() -> FaceCurve {
        compute_face_curve(&lg_b(), SpeciesSubset::from_species(&[1, 2]).unwrap(), 32, IterationOptions::default())
            .unwrap()
    }

    #[test]
    fn fit_recovers_linear_series() {
        let s: Vec<f64> = (1..=20).map(|n| 0.3 - 0.5 * n as f64).collect();
        let (nu, c, r2) = fit_decay(&s);
        assert!((nu - 0.5).abs() < 1e-12 && (c - 0.3).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lg_b_face_orbit_separates() {
        let f = exp_separation_diagnostic(&lg_b(), &curve(), &SeparationOptions::default()).unwrap();
        assert_eq!(f.series.len(), 60);
        assert!(f.nu_hat > 0.0 && f.r_squared >= 0.9, "{} {}", f.nu_hat, f.r_squared);
    }

    #[test]
    fn anchored_at_fixed_point() {
        let opts =
            SeparationOptions { start: Some(Point3::new(4.0 / 3.0 + 5e-7, 4.0 / 3.0, 0.0)), ..Default::default() };
        let f = exp_separation_diagnostic(&lg_b(), &curve(), &opts).unwrap();
        let nu = (7.0f64 / 3.0).ln();
        assert!((f.nu_hat - nu).abs() <= 0.05 * nu, "{}", f.nu_hat);
    }

    #[test]
    fn identical_vectors_do_not_separate() {
        let opts = SeparationOptions {
            measure: SeparationMeasure::NormRatio,
            v_r: Some([1.0, 1.0]),
            v_w: Some([1.0, 1.0]),
            ..Default::default()
        };
        let f = exp_separation_diagnostic(&lg_b(), &curve(), &opts).unwrap();
        assert!(f.series.iter().all(|s| s.abs() < 1e-12));
        assert!(f.nu_hat.abs() < 1e-12);
    }

    #[test]
    fn short_series_is_rejected() {
        let opts = SeparationOptions { n_max: 5, ..Default::default() };
        assert_eq!(exp_separation_diagnostic(&lg_b(), &curve(), &opts).unwrap_err(), SeparationError::ShortSeries(5));
    }
}
