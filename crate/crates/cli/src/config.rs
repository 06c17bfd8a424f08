//! Run configuration: strict JSON schema, defaults and validation.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cslab_core::analysis::{ConeOptions, ConvexityOptions, LemmaOptions, SeparationMeasure, SeparationOptions};
use cslab_core::simplex::IterationOptions;
use cslab_core::spectra::DEFAULT_MARGIN_TOL;
use cslab_core::{JacobianMode, LeslieGowerParams, MapModel, Point3, RickerParams, SpeciesSubset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plugin::PluginMap;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Schema(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    LeslieGower(LeslieGowerSpec),
    Ricker(RickerSpec),
    External(ExternalSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeslieGowerSpec {
    pub lambda: [f64; 3],
    pub a: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RickerSpec {
    pub r: [f64; 3],
    pub a: [[f64; 3]; 3],
}

/// A map evaluated by a child process; see [`crate::plugin`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub absorbing_box: [f64; 3],
    /// Whether the plugin answers `jacobian` requests.
    #[serde(default)]
    pub jacobian: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianKind {
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianConfig {
    pub mode: JacobianKind,
    pub h: f64,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        JacobianConfig { mode: JacobianKind::Analytic, h: cslab_core::models::DEFAULT_FD_STEP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub level: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { level: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityConfig {
    pub tol_c: Option<f64>,
    pub pair_budget: usize,
    pub boundary_band: Option<f64>,
    pub margin_separation: f64,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        let d = ConvexityOptions::default();
        ConvexityConfig {
            tol_c: d.tol_c,
            pair_budget: d.pair_budget,
            boundary_band: d.boundary_band,
            margin_separation: d.margin_separation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractionConfig {
    pub n_seeds: usize,
    pub burn_in: usize,
}

impl Default for AttractionConfig {
    fn default() -> Self {
        AttractionConfig { n_seeds: 100, burn_in: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationConfig {
    pub face: SpeciesSubset,
    pub n_max: usize,
    pub measure: SeparationMeasure,
    pub start: Option<Point3>,
    pub v_r: Option<[f64; 2]>,
    pub v_w: Option<[f64; 2]>,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        let d = SeparationOptions::default();
        SeparationConfig {
            face: SpeciesSubset::PLANAR[0],
            n_max: d.n_max,
            measure: d.measure,
            start: d.start,
            v_r: d.v_r,
            v_w: d.v_w,
        }
    }
}

impl SeparationConfig {
    pub fn options(&self) -> SeparationOptions {
        SeparationOptions { n_max: self.n_max, measure: self.measure, start: self.start, v_r: self.v_r, v_w: self.v_w }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub margin_tol: f64,
    pub hypothesis_budget: usize,
    pub convexity: ConvexityConfig,
    pub cone: ConeOptions,
    pub lemma: LemmaOptions,
    pub attraction: AttractionConfig,
    pub separation: SeparationConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            margin_tol: DEFAULT_MARGIN_TOL,
            hypothesis_budget: 500,
            convexity: ConvexityConfig::default(),
            cone: ConeOptions::default(),
            lemma: LemmaOptions::default(),
            attraction: AttractionConfig::default(),
            separation: SeparationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("cslab-out") }
    }
}

/// Leslie–Gower parameter sweep: `λ_i` and off-diagonal `a_ij` drawn
/// independently and uniformly from their intervals, `a_ii` fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub samples: usize,
    pub lambda: [f64; 2],
    pub a_diag: f64,
    pub a_off: [f64; 2],
    /// Explicit models swept instead of random samples.
    pub models: Vec<ModelSpec>,
    pub workers: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            samples: 200,
            lambda: [1.5, 4.0],
            a_diag: 1.0,
            a_off: [0.2, 2.5],
            models: Vec::new(),
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub jacobian: JacobianConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub iteration: IterationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        let d = IterationOptions::default();
        IterationConfig { max_iters: d.max_iters, tol: d.tol }
    }
}

impl RunConfig {
    pub fn iteration_options(&self) -> IterationOptions {
        IterationOptions { max_iters: self.iteration.max_iters, tol: self.iteration.tol }
    }

    pub fn convexity_options(&self) -> ConvexityOptions {
        let c = &self.analysis.convexity;
        ConvexityOptions {
            tol_c: c.tol_c,
            pair_budget: c.pair_budget,
            seed: self.seed,
            boundary_band: c.boundary_band,
            margin_separation: c.margin_separation,
        }
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        match self.jacobian.mode {
            JacobianKind::Analytic => JacobianMode::Analytic,
            JacobianKind::FiniteDifference => JacobianMode::FiniteDifference { h: self.jacobian.h },
        }
    }

    /// The configured model; a config error if the config has none.
    pub fn build_model(&self) -> Result<MapModel, ConfigError> {
        let spec = self.model.as_ref().ok_or_else(|| invalid("model", "this command needs a model"))?;
        build_model(spec, self.jacobian_mode(), "model")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.model {
            validate_model(m, "model")?;
        }
        positive("jacobian.h", self.jacobian.h)?;
        if self.grid.level == 0 {
            return Err(invalid("grid.level", "must be at least 1"));
        }
        if self.grid.level > 1024 {
            return Err(invalid("grid.level", format!("{} exceeds the maximum 1024", self.grid.level)));
        }
        if self.iteration.max_iters == 0 {
            return Err(invalid("iteration.max_iters", "must be at least 1"));
        }
        positive("iteration.tol", self.iteration.tol)?;
        let a = &self.analysis;
        positive("analysis.margin_tol", a.margin_tol)?;
        if a.hypothesis_budget == 0 {
            return Err(invalid("analysis.hypothesis_budget", "must be at least 1"));
        }
        if let Some(t) = a.convexity.tol_c {
            positive("analysis.convexity.tol_c", t)?;
        }
        if let Some(b) = a.convexity.boundary_band {
            positive("analysis.convexity.boundary_band", b)?;
        }
        positive("analysis.convexity.margin_separation", a.convexity.margin_separation)?;
        if let Some(h) = a.cone.h0 {
            positive("analysis.cone.h0", h)?;
        }
        if a.cone.refine == 0 {
            return Err(invalid("analysis.cone.refine", "must be at least 1"));
        }
        positive("analysis.lemma.eps_cone", a.lemma.eps_cone)?;
        positive("analysis.lemma.c_low", a.lemma.c_low)?;
        if a.separation.face.len() != 2 {
            return Err(invalid("analysis.separation.face", format!("{} is not a planar face", a.separation.face)));
        }
        if a.separation.n_max < 10 {
            return Err(invalid("analysis.separation.n_max", "must be at least 10"));
        }
        if let Some(s) = &self.sweep {
            validate_sweep(s)?;
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn validate_model(spec: &ModelSpec, field: &str) -> Result<(), ConfigError> {
    let r = match spec {
        ModelSpec::LeslieGower(p) => LeslieGowerParams::new(p.lambda, p.a).map(|_| ()),
        ModelSpec::Ricker(p) => RickerParams::new(p.r, p.a).map(|_| ()),
        ModelSpec::External(e) => {
            if e.command.is_empty() {
                return Err(invalid(&format!("{field}.command"), "must not be empty"));
            }
            for (i, m) in e.absorbing_box.iter().enumerate() {
                positive(&format!("{field}.absorbing_box[{i}]"), *m)?;
            }
            Ok(())
        }
    };
    r.map_err(|e| invalid(field, e.to_string()))
}

fn validate_sweep(s: &SweepSpec) -> Result<(), ConfigError> {
    if s.models.is_empty() {
        if s.samples == 0 {
            return Err(invalid("sweep.samples", "must be at least 1"));
        }
        let [lo, hi] = s.lambda;
        if !(lo > 1.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("sweep.lambda", format!("need 1 < lo <= hi, got [{lo}, {hi}]")));
        }
        positive("sweep.a_diag", s.a_diag)?;
        let [lo, hi] = s.a_off;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("sweep.a_off", format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
        }
    }
    for (i, m) in s.models.iter().enumerate() {
        validate_model(m, &format!("sweep.models[{i}]"))?;
    }
    if s.workers == Some(0) {
        return Err(invalid("sweep.workers", "must be at least 1"));
    }
    Ok(())
}

pub fn build_model(spec: &ModelSpec, mode: JacobianMode, field: &str) -> Result<MapModel, ConfigError> {
    let model = match spec {
        ModelSpec::LeslieGower(p) => {
            MapModel::leslie_gower(LeslieGowerParams::new(p.lambda, p.a).map_err(|e| invalid(field, e.to_string()))?)
        }
        ModelSpec::Ricker(p) => {
            MapModel::ricker(RickerParams::new(p.r, p.a).map_err(|e| invalid(field, e.to_string()))?)
        }
        ModelSpec::External(e) => {
            let map = PluginMap::spawn(e).map_err(|err| invalid(&format!("{field}.command"), err.to_string()))?;
            let model = MapModel::external(Arc::new(map), Some(Point3(e.absorbing_box)));
            // Plugins without Jacobians are differentiated numerically either way.
            let mode = match mode {
                JacobianMode::Analytic if !e.jacobian => model.jacobian_mode,
                m => m,
            };
            return Ok(model.with_jacobian_mode(mode));
        }
    };
    Ok(model.with_jacobian_mode(mode))
}

/// Rewrites bare-fraction numbers such as `.5` (and `-.5`) to `0.5`, which
/// strict JSON rejects; string contents are left alone.
fn normalize_fractions(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut prev = ' ';
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else if c == '.' && !prev.is_ascii_digit() && chars.peek().is_some_and(|d| d.is_ascii_digit()) {
            out.push('0');
        }
        out.push(c);
        prev = c;
    }
    out
}

/// Parses and validates a config document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let text = normalize_fractions(text);
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Schema(describe(&e)))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

/// Adds a "did you mean" hint to unknown-key and unknown-variant errors.
fn describe(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    let mut out = format!("line {} column {}: {}", e.line(), e.column(), strip_position(&msg));
    if msg.starts_with("unknown field") || msg.starts_with("unknown variant") {
        let ticked: Vec<&str> = msg.split('`').skip(1).step_by(2).collect();
        if let Some((given, expected)) = ticked.split_first() {
            if let Some(best) = suggest(given, expected) {
                out.push_str(&format!(" (did you mean `{best}`?)"));
            }
        }
    }
    out
}

fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) => &msg[..i],
        None => msg,
    }
}

fn suggest<'a>(given: &str, expected: &[&'a str]) -> Option<&'a str> {
    expected
        .iter()
        .map(|c| (strsim::normalized_damerau_levenshtein(given, c), *c))
        .filter(|(s, _)| *s >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}
