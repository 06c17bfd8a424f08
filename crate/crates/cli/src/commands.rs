//! The `cslab` commands. Each one writes its reports below the output
//! directory and finishes with `manifest.json`.

use std::fmt::Write as _;

use cslab_core::analysis::{
    convexity_hull_test, convexity_midpoint_test, estimate_tangent_cone, exp_separation_diagnostic, lemma_diagnostics,
    non_tangency_check, ConvexityReport, ConvexityVerdict, LemmaReport, ScaleStats, SeparationFit, TangencyVerdict,
};
use cslab_core::models::{check_h2, check_h3prime, check_h4prime, check_h6, Hypothesis};
use cslab_core::simplex::{
    attraction_check, compute_face_curve, compute_surface_at_level, invariance_residual, surface_csv, surface_obj,
    unorderedness_check, AttractionReport, FaceCurve, SimplexApproximation,
};
use cslab_core::spectra::{classify, find_axial_fixed_points, find_interior_fixed_points, find_planar_fixed_points};
use cslab_core::{
    ClassVerdict, ClassificationReport, FixedPointRecord, HypothesisReport, MapModel, ModelError, Point3,
    SpeciesSubset, Verdict,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{sha256_hex, Artifacts, Manifest};
use crate::{exit, sweep, CliError};

/// Smallest grid level accepted by commands that build a surface.
pub const MIN_SURFACE_LEVEL: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum CommandKind {
    Hypotheses,
    Simplex,
    FixedPoints,
    Classify,
    Convexity,
    Cone,
    Separation,
    Sweep,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Hypotheses => "hypotheses",
            CommandKind::Simplex => "simplex",
            CommandKind::FixedPoints => "fixed-points",
            CommandKind::Classify => "classify",
            CommandKind::Convexity => "convexity",
            CommandKind::Cone => "cone",
            CommandKind::Separation => "separation",
            CommandKind::Sweep => "sweep",
        }
    }

    fn needs_surface(&self) -> bool {
        matches!(
            self,
            CommandKind::Simplex
                | CommandKind::Convexity
                | CommandKind::Cone
                | CommandKind::Separation
                | CommandKind::Sweep
        )
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub error: Option<CliError>,
    pub manifest: Manifest,
}

/// Runs `cmd` and writes its artifacts and manifest to `cfg.output.dir`.
/// `config_bytes` is the raw config text, hashed into the manifest.
pub fn run_command(cmd: CommandKind, cfg: &RunConfig, config_bytes: &[u8]) -> Result<RunOutcome, CliError> {
    let mut art = Artifacts::new(&cfg.output.dir)?;
    let result = dispatch(cmd, cfg, &mut art);
    let (exit_code, error) = match result {
        Ok(code) => (code, None),
        Err(e) => (e.exit_code(), Some(e)),
    };
    let manifest = art.finish(Manifest {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(config_bytes),
        seed: cfg.seed,
        level: cfg.grid.level,
        exit_code,
        error: error.as_ref().map(|e| e.to_string()),
        files: Vec::new(),
        timings: Vec::new(),
    })?;
    Ok(RunOutcome { exit_code, error, manifest })
}

fn dispatch(cmd: CommandKind, cfg: &RunConfig, art: &mut Artifacts) -> Result<i32, CliError> {
    if cmd.needs_surface() && cfg.grid.level < MIN_SURFACE_LEVEL {
        return Err(CliError::config(
            "grid.level",
            format!("{} needs level >= {MIN_SURFACE_LEVEL}, got {}", cmd.name(), cfg.grid.level),
        ));
    }
    if cmd == CommandKind::Sweep {
        return sweep::run_sweep(cfg, art);
    }
    let model = cfg.build_model()?;
    match cmd {
        CommandKind::Hypotheses => {
            let out = art.timed("hypotheses", || hypotheses(&model, cfg))?;
            art.write_json("hypotheses.json", &out)?;
            Ok(if out.verdict == Verdict::Fail { exit::HYPOTHESIS } else { exit::OK })
        }
        CommandKind::Simplex => simplex_command(&model, cfg, art),
        CommandKind::FixedPoints => {
            let out = art.timed("fixed_points", || fixed_points(&model))?;
            art.write_json("fixed_points.json", &out)?;
            Ok(exit::OK)
        }
        CommandKind::Classify => {
            let report = art.timed("classify", || classify_model(&model, cfg))?;
            art.write("classify.json", &classify_json(&report))?;
            Ok(exit::OK)
        }
        CommandKind::Convexity => {
            let approx = art.timed("surface", || surface(&model, cfg))?;
            let out = art.timed("convexity", || convexity(&approx, cfg))?;
            art.write_json("convexity.json", &out)?;
            Ok(exit::OK)
        }
        CommandKind::Cone => cone_command(&model, cfg, art),
        CommandKind::Separation => {
            let face = cfg.analysis.separation.face;
            let curve =
                art.timed("face_curve", || compute_face_curve(&model, face, cfg.grid.level, cfg.iteration_options()))?;
            let fit = art.timed("separation", || separation(&model, &curve, cfg))?;
            art.write_json("separation.json", &fit)?;
            Ok(exit::OK)
        }
        CommandKind::Sweep => unreachable!("handled above"),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckerError {
    pub hypothesis: Hypothesis,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesesReport {
    pub model: String,
    pub budget: usize,
    pub seed: u64,
    pub reports: Vec<HypothesisReport>,
    /// Checkers that could not run; a missing axial fixed point counts as a
    /// failure of H4'.
    pub errors: Vec<CheckerError>,
    pub verdict: Verdict,
}

pub fn hypotheses(model: &MapModel, cfg: &RunConfig) -> Result<HypothesesReport, CliError> {
    let (budget, seed) = (cfg.analysis.hypothesis_budget, cfg.seed);
    let runs: [(Hypothesis, Result<HypothesisReport, ModelError>); 4] = [
        (Hypothesis::H2, check_h2(model, budget, seed)),
        (Hypothesis::H3Prime, check_h3prime(model, budget, seed)),
        (Hypothesis::H4Prime, check_h4prime(model)),
        (Hypothesis::H6, check_h6(model, budget, seed)),
    ];
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for (h, r) in runs {
        match r {
            Ok(r) => reports.push(r),
            Err(e @ ModelError::NoAxialFixedPoint { .. }) => {
                errors.push(CheckerError { hypothesis: h, error: e.to_string() })
            }
            Err(e) => return Err(e.into()),
        }
    }
    let verdict = if !errors.is_empty() || reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(HypothesesReport { model: model.fingerprint(), budget, seed, reports, errors, verdict })
}

pub fn surface(model: &MapModel, cfg: &RunConfig) -> Result<SimplexApproximation, CliError> {
    Ok(compute_surface_at_level(model, cfg.grid.level, cfg.iteration_options())?)
}

#[derive(Clone, Debug, Serialize)]
pub struct FaceCurveSummary {
    pub face: SpeciesSubset,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UnorderednessSummary {
    pub margin: f64,
    pub pairs_checked: usize,
    pub violation_count: usize,
    /// Up to ten offending node pairs.
    pub violations: Vec<(usize, usize)>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimplexReport {
    pub model: String,
    pub level: usize,
    pub nodes: usize,
    pub triangles: usize,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    pub nonmonotone_tail: bool,
    pub boundary_mismatch: f64,
    pub mean_radius: f64,
    pub max_radius_deviation_from_one: f64,
    pub face_curves: Vec<FaceCurveSummary>,
    pub invariance_residual: f64,
    /// Two grid spacings.
    pub invariance_threshold: f64,
    pub invariance_passed: bool,
    pub unorderedness: UnorderednessSummary,
    pub attraction: AttractionReport,
}

fn face_curves_csv(curves: &[FaceCurve]) -> String {
    let mut s = String::from("face,k,t,rho,x1,x2,x3\n");
    for c in curves {
        let labels: Vec<String> = c.face.labels().iter().map(|l| l.to_string()).collect();
        let l = c.level();
        for k in 0..=l {
            let p = c.point(k);
            let _ =
                writeln!(s, "{},{k},{},{},{},{},{}", labels.join(""), k as f64 / l as f64, c.rho[k], p[0], p[1], p[2]);
        }
    }
    s
}

fn simplex_command(model: &MapModel, cfg: &RunConfig, art: &mut Artifacts) -> Result<i32, CliError> {
    let approx = art.timed("surface", || surface(model, cfg))?;
    let residual = art.timed("invariance", || invariance_residual(model, &approx))?;
    let unordered = art.timed("unorderedness", || unorderedness_check(&approx));
    let att = cfg.analysis.attraction;
    let attraction =
        art.timed("attraction", || attraction_check(model, &approx, att.n_seeds, att.burn_in, cfg.seed))?;
    let s = &approx.surface;
    let threshold = 2.0 * s.spacing();
    let report = SimplexReport {
        model: model.fingerprint(),
        level: approx.level(),
        nodes: s.grid.len(),
        triangles: s.grid.triangles.len(),
        iterations: s.iterations,
        converged: approx.converged(),
        last_change: approx.hausdorff_step,
        nonmonotone_tail: approx.nonmonotone_tail(),
        boundary_mismatch: approx.boundary_mismatch(),
        mean_radius: s.mean_radius(),
        max_radius_deviation_from_one: s.rho.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max),
        face_curves: approx
            .face_curves
            .iter()
            .map(|c| FaceCurveSummary { face: c.face, iterations: c.iterations, residual: c.residual })
            .collect(),
        invariance_residual: residual,
        invariance_threshold: threshold,
        invariance_passed: residual <= threshold,
        unorderedness: UnorderednessSummary {
            margin: unordered.margin,
            pairs_checked: unordered.pairs_checked,
            violation_count: unordered.violations.len(),
            violations: unordered.violations.iter().take(10).copied().collect(),
            passed: unordered.passed(),
        },
        attraction,
    };
    art.write("surface.csv", surface_csv(s).as_bytes())?;
    art.write("surface.obj", surface_obj(s).as_bytes())?;
    art.write("face_curves.csv", face_curves_csv(&approx.face_curves).as_bytes())?;
    art.write_json("simplex.json", &report)?;
    Ok(exit::OK)
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanarEntry {
    pub face: SpeciesSubset,
    pub points: Vec<FixedPointRecord>,
    pub newton_failures: usize,
    pub continuum: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointsReport {
    pub model: String,
    pub axial: Vec<FixedPointRecord>,
    pub planar: Vec<PlanarEntry>,
    pub interior: Vec<FixedPointRecord>,
}

pub fn fixed_points(model: &MapModel) -> Result<FixedPointsReport, CliError> {
    let axial = find_axial_fixed_points(model)?;
    let mut planar = Vec::new();
    for face in SpeciesSubset::PLANAR {
        let s = find_planar_fixed_points(model, face)?;
        let continuum = s.is_continuum();
        planar.push(PlanarEntry { face, points: s.points, newton_failures: s.newton_failures, continuum });
    }
    let interior = find_interior_fixed_points(model)?;
    Ok(FixedPointsReport { model: model.fingerprint(), axial, planar, interior })
}

pub fn classify_model(model: &MapModel, cfg: &RunConfig) -> Result<ClassificationReport, CliError> {
    Ok(classify(model, cfg.analysis.margin_tol)?)
}

/// The exact bytes of `classify.json`; sweeps reuse them per sample.
pub fn classify_json(report: &ClassificationReport) -> Vec<u8> {
    crate::manifest::to_json(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityPair {
    pub level: usize,
    pub midpoint: ConvexityReport,
    pub hull: ConvexityReport,
    /// Both verdicts non-Marginal and equal, or both Marginal.
    pub methods_agree: bool,
    /// Midpoint verdict Convex with margin above two grid spacings, and the
    /// hull test also Convex.
    pub convex_with_margin: bool,
}

pub fn convexity(approx: &SimplexApproximation, cfg: &RunConfig) -> Result<ConvexityPair, CliError> {
    let opts = cfg.convexity_options();
    let midpoint = convexity_midpoint_test(approx, &opts)?;
    let hull = convexity_hull_test(approx, &opts)?;
    let methods_agree = midpoint.verdict == hull.verdict;
    let convex_with_margin = midpoint.convex_with_margin() && hull.verdict == ConvexityVerdict::Convex;
    Ok(ConvexityPair { level: approx.level(), midpoint, hull, methods_agree, convex_with_margin })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeEntry {
    pub face: SpeciesSubset,
    pub location: Point3,
    pub csv: Option<String>,
    pub stats: Vec<ScaleStats>,
    pub lemmas: Option<LemmaReport>,
    pub tangency: Option<TangencyVerdict>,
    /// All three lemmas Consistent at the two finest scales.
    pub consistent_at_finest_two: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub model: String,
    pub level: usize,
    pub classify_verdict: ClassVerdict,
    pub notice: Option<String>,
    pub entries: Vec<ConeEntry>,
}

impl ConeReport {
    pub fn has_points(&self) -> bool {
        !self.entries.is_empty()
    }

    pub fn all_consistent(&self) -> bool {
        self.has_points() && self.entries.iter().all(|e| e.consistent_at_finest_two)
    }
}

/// Isolated planar fixed points of a classification, skipping continuum faces.
fn isolated_planar(report: &ClassificationReport) -> impl Iterator<Item = &cslab_core::SpectrumRecord> {
    report
        .spectra
        .iter()
        .filter(|s| s.fp.face.len() == 2 && s.other_vector.is_some() && !report.continuum_faces.contains(&s.fp.face))
}

/// Cone estimates and lemma diagnostics at every isolated planar fixed
/// point; the CSV dumps are returned alongside, keyed by file name.
pub fn cone(
    model: &MapModel,
    approx: &SimplexApproximation,
    report: &ClassificationReport,
    cfg: &RunConfig,
) -> (ConeReport, Vec<(String, String)>) {
    let mut entries = Vec::new();
    let mut csvs = Vec::new();
    for (n, spec) in isolated_planar(report).enumerate() {
        let labels: String = spec.fp.face.labels().iter().map(|l| l.to_string()).collect();
        let mut entry = ConeEntry {
            face: spec.fp.face,
            location: spec.fp.location,
            csv: None,
            stats: Vec::new(),
            lemmas: None,
            tangency: None,
            consistent_at_finest_two: false,
            error: None,
        };
        match estimate_tangent_cone(&approx.surface, spec, &cfg.analysis.cone) {
            Ok(est) => {
                let lemmas = lemma_diagnostics(&est, &cfg.analysis.lemma);
                let name = format!("cone_{labels}_{n}.csv");
                csvs.push((name.clone(), est.to_csv()));
                entry.csv = Some(name);
                entry.consistent_at_finest_two = lemmas.consistent_at_finest(2);
                entry.tangency = Some(non_tangency_check(&est));
                entry.stats = est.stats;
                entry.lemmas = Some(lemmas);
            }
            Err(e) => entry.error = Some(e.to_string()),
        }
        entries.push(entry);
    }
    let notice = match (entries.is_empty(), report.verdict) {
        (true, ClassVerdict::Degenerate) => Some("Degenerate: no isolated planar fixed point".to_string()),
        (true, _) => Some("no isolated planar fixed point".to_string()),
        _ => None,
    };
    let out = ConeReport {
        model: model.fingerprint(),
        level: approx.level(),
        classify_verdict: report.verdict,
        notice,
        entries,
    };
    (out, csvs)
}

fn cone_command(model: &MapModel, cfg: &RunConfig, art: &mut Artifacts) -> Result<i32, CliError> {
    let report = art.timed("classify", || classify_model(model, cfg))?;
    if isolated_planar(&report).next().is_none() {
        let notice = if report.verdict == ClassVerdict::Degenerate {
            "Degenerate: no isolated planar fixed point"
        } else {
            "no isolated planar fixed point"
        };
        let out = ConeReport {
            model: model.fingerprint(),
            level: cfg.grid.level,
            classify_verdict: report.verdict,
            notice: Some(notice.to_string()),
            entries: Vec::new(),
        };
        art.write_json("cone.json", &out)?;
        eprintln!("{notice}");
        return Ok(exit::NUMERICAL);
    }
    let approx = art.timed("surface", || surface(model, cfg))?;
    let (out, csvs) = art.timed("cone", || cone(model, &approx, &report, cfg));
    for (name, csv) in &csvs {
        art.write(name, csv.as_bytes())?;
    }
    art.write_json("cone.json", &out)?;
    if let Some(e) = out.entries.iter().find_map(|e| e.error.as_ref()) {
        return Err(CliError::Numerical(e.clone()));
    }
    Ok(exit::OK)
}

pub fn separation(model: &MapModel, curve: &FaceCurve, cfg: &RunConfig) -> Result<SeparationFit, CliError> {
    Ok(exp_separation_diagnostic(model, curve, &cfg.analysis.separation.options())?)
}
