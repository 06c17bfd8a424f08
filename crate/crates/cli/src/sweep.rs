//! Parameter sweeps testing the implication
//! "convex with margin ⇒ NeatlyEmbeddedPredicted" sample by sample.
//!
//! Samples run on a rayon pool. Each worker writes its reports to
//! `samples/NNNN/`; the rows are merged into `sweep.csv` in index order.

use std::fmt::Write as _;
use std::fs;

use cslab_core::analysis::ConvexityVerdict;
use cslab_core::{mix_seed, ClassVerdict, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{classify_json, classify_model, cone, convexity, hypotheses, surface};
use crate::config::{build_model, LeslieGowerSpec, ModelSpec, RunConfig, SweepSpec};
use crate::manifest::{to_json, Artifacts};
use crate::{exit, CliError};

/// Env var overriding the worker count.
pub const WORKERS_ENV: &str = "CSLAB_WORKERS";

/// Files written for one sample: path relative to the output directory, contents.
pub type SampleFiles = Vec<(String, Vec<u8>)>;

const SAMPLE_STREAM: u64 = 0x5357_4545_5000_0000;

/// The models of a sweep: the explicit list if given, otherwise seeded
/// Leslie–Gower samples.
pub fn sample_models(spec: &SweepSpec, seed: u64) -> Vec<ModelSpec> {
    if !spec.models.is_empty() {
        return spec.models.clone();
    }
    (0..spec.samples)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SAMPLE_STREAM ^ k as u64));
            let lambda: [f64; 3] = std::array::from_fn(|_| rng.random_range(spec.lambda[0]..=spec.lambda[1]));
            let mut a = [[spec.a_diag; 3]; 3];
            for (i, row) in a.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    if i != j {
                        *v = rng.random_range(spec.a_off[0]..=spec.a_off[1]);
                    }
                }
            }
            ModelSpec::LeslieGower(LeslieGowerSpec { lambda, a })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Implication {
    /// Convex with margin and NeatlyEmbeddedPredicted.
    Holds,
    Counterexample,
    /// Convex with margin but Marginal classification.
    ExcludedMarginal,
    /// Midpoint test convex with margin, hull test not Convex.
    ExcludedDisagreement,
    /// Not convex with margin: no constraint.
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConeStatus {
    Consistent,
    Inconsistent,
    NoPlanarPoint,
    NotChecked,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub model: ModelSpec,
    pub hypotheses: Option<Verdict>,
    pub convex_verdict: Option<ConvexityVerdict>,
    pub convex_margin: Option<f64>,
    pub convex_worst: Option<f64>,
    pub hull_verdict: Option<ConvexityVerdict>,
    pub hull_worst: Option<f64>,
    pub classify_verdict: Option<ClassVerdict>,
    pub min_eig_margin: Option<f64>,
    pub convex_with_margin: bool,
    pub implication: Implication,
    pub cone: ConeStatus,
    pub flags: Vec<String>,
}

impl SweepRow {
    fn new(index: usize, model: ModelSpec) -> Self {
        SweepRow {
            index,
            model,
            hypotheses: None,
            convex_verdict: None,
            convex_margin: None,
            convex_worst: None,
            hull_verdict: None,
            hull_worst: None,
            classify_verdict: None,
            min_eig_margin: None,
            convex_with_margin: false,
            implication: Implication::NotApplicable,
            cone: ConeStatus::NotChecked,
            flags: Vec::new(),
        }
    }

    pub fn has_error(&self) -> bool {
        self.flags.iter().any(|f| f.contains("error"))
    }
}

pub const CSV_HEADER: &str = "index,kind,rate1,rate2,rate3,a11,a12,a13,a21,a22,a23,a31,a32,a33,\
hypotheses,convex_verdict,convex_margin,convex_worst,hull_verdict,hull_worst,classify_verdict,\
min_eig_margin,convex_with_margin,implication,cone_lemmas,flags";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &SweepRow) -> String {
    let (kind, rates, a) = match &r.model {
        ModelSpec::LeslieGower(p) => ("leslie_gower", Some(p.lambda), Some(p.a)),
        ModelSpec::Ricker(p) => ("ricker", Some(p.r), Some(p.a)),
        ModelSpec::External(_) => ("external", None, None),
    };
    let mut cols: Vec<String> = vec![r.index.to_string(), kind.to_string()];
    cols.extend((0..3).map(|i| opt(rates.map(|v| v[i]))));
    cols.extend((0..9).map(|k| opt(a.map(|a| a[k / 3][k % 3]))));
    cols.push(opt(r.hypotheses.map(|v| format!("{v:?}"))));
    cols.push(opt(r.convex_verdict.map(|v| v.as_str())));
    cols.push(opt(r.convex_margin));
    cols.push(opt(r.convex_worst));
    cols.push(opt(r.hull_verdict.map(|v| v.as_str())));
    cols.push(opt(r.hull_worst));
    cols.push(opt(r.classify_verdict.map(|v| v.as_str())));
    cols.push(opt(r.min_eig_margin));
    cols.push(r.convex_with_margin.to_string());
    cols.push(format!("{:?}", r.implication));
    cols.push(format!("{:?}", r.cone));
    cols.push(r.flags.iter().map(|f| f.replace([',', '\n', ';'], " ")).collect::<Vec<_>>().join(";"));
    cols.join(",")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", csv_row(r));
    }
    s
}

/// Runs one sample; returns its row and the files to write.
pub fn run_sample(cfg: &RunConfig, index: usize, spec: ModelSpec) -> (SweepRow, SampleFiles) {
    let dir = format!("samples/{index:04}");
    let mut row = SweepRow::new(index, spec);
    let mut files: SampleFiles = Vec::new();
    let model = match build_model(&row.model, cfg.jacobian_mode(), "model") {
        Ok(m) => m,
        Err(e) => {
            row.flags.push(format!("model error: {e}"));
            return (row, files);
        }
    };
    match hypotheses(&model, cfg) {
        Ok(h) => {
            row.hypotheses = Some(h.verdict);
            files.push((format!("{dir}/hypotheses.json"), to_json(&h)));
            if h.verdict == Verdict::Fail {
                let failed: Vec<String> = h
                    .reports
                    .iter()
                    .filter(|r| r.verdict == Verdict::Fail)
                    .map(|r| r.hypothesis.to_string())
                    .chain(h.errors.iter().map(|e| e.hypothesis.to_string()))
                    .collect();
                row.flags.push(format!("hypotheses failed: {}", failed.join(" ")));
                return (row, files);
            }
            if h.verdict == Verdict::Inconclusive {
                row.flags.push("hypotheses inconclusive".into());
            }
        }
        Err(e) => {
            row.flags.push(format!("hypotheses error: {e}"));
            return (row, files);
        }
    }
    let approx = surface(&model, cfg);
    let pair = match &approx {
        Ok(a) => match convexity(a, cfg) {
            Ok(p) => Some(p),
            Err(e) => {
                row.flags.push(format!("convexity error: {e}"));
                None
            }
        },
        Err(e) => {
            row.flags.push(format!("simplex error: {e}"));
            None
        }
    };
    if let Some(p) = &pair {
        row.convex_verdict = Some(p.midpoint.verdict);
        row.convex_margin = Some(p.midpoint.margin);
        row.convex_worst = Some(p.midpoint.worst_violation);
        row.hull_verdict = Some(p.hull.verdict);
        row.hull_worst = Some(p.hull.worst_violation);
        row.convex_with_margin = p.convex_with_margin;
        if !p.methods_agree {
            row.flags.push("convexity methods disagree".into());
        }
        files.push((format!("{dir}/convexity.json"), to_json(p)));
    }
    let report = match classify_model(&model, cfg) {
        Ok(r) => {
            row.classify_verdict = Some(r.verdict);
            row.min_eig_margin = Some(r.min_margin);
            files.push((format!("{dir}/classify.json"), classify_json(&r)));
            Some(r)
        }
        Err(e) => {
            row.flags.push(format!("classify error: {e}"));
            None
        }
    };
    let midpoint_margin = pair.as_ref().is_some_and(|p| p.midpoint.convex_with_margin());
    row.implication = if row.convex_with_margin {
        match &report {
            Some(r) if r.verdict == ClassVerdict::Marginal => Implication::ExcludedMarginal,
            Some(r) if r.verdict == ClassVerdict::NeatlyEmbeddedPredicted && r.min_margin > cfg.analysis.margin_tol => {
                Implication::Holds
            }
            _ => Implication::Counterexample,
        }
    } else if midpoint_margin {
        Implication::ExcludedDisagreement
    } else {
        Implication::NotApplicable
    };
    if let (true, Ok(a), Some(r)) = (row.convex_with_margin, &approx, &report) {
        let (c, csvs) = cone(&model, a, r, cfg);
        row.cone = if !c.has_points() {
            ConeStatus::NoPlanarPoint
        } else if c.all_consistent() {
            ConeStatus::Consistent
        } else {
            ConeStatus::Inconsistent
        };
        for e in c.entries.iter().filter_map(|e| e.error.as_ref()) {
            row.flags.push(format!("cone error: {e}"));
        }
        for (name, csv) in csvs {
            files.push((format!("{dir}/{name}"), csv.into_bytes()));
        }
        files.push((format!("{dir}/cone.json"), to_json(&c)));
    }
    (row, files)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepSummary {
    pub samples: usize,
    pub level: usize,
    pub seed: u64,
    pub workers: usize,
    pub hypotheses_failed: usize,
    pub errors: usize,
    pub convex: usize,
    pub nonconvex: usize,
    pub marginal_convexity: usize,
    pub method_disagreements: usize,
    pub convex_with_margin: usize,
    pub holds: usize,
    pub counterexamples: usize,
    pub excluded_marginal_classification: usize,
    pub excluded_method_disagreement: usize,
    pub counterexample_indices: Vec<usize>,
    pub cone_checked: usize,
    pub cone_consistent: usize,
    pub cone_inconsistent_indices: Vec<usize>,
}

pub fn summarize(rows: &[SweepRow], level: usize, seed: u64, workers: usize) -> SweepSummary {
    let mut s = SweepSummary { samples: rows.len(), level, seed, workers, ..Default::default() };
    for r in rows {
        if r.hypotheses == Some(Verdict::Fail) {
            s.hypotheses_failed += 1;
        }
        if r.has_error() {
            s.errors += 1;
        }
        match r.convex_verdict {
            Some(ConvexityVerdict::Convex) => s.convex += 1,
            Some(ConvexityVerdict::Nonconvex) => s.nonconvex += 1,
            Some(ConvexityVerdict::Marginal) => s.marginal_convexity += 1,
            None => {}
        }
        if r.convex_verdict.is_some() && r.convex_verdict != r.hull_verdict {
            s.method_disagreements += 1;
        }
        if r.convex_with_margin {
            s.convex_with_margin += 1;
        }
        match r.implication {
            Implication::Holds => s.holds += 1,
            Implication::Counterexample => {
                s.counterexamples += 1;
                s.counterexample_indices.push(r.index);
            }
            Implication::ExcludedMarginal => s.excluded_marginal_classification += 1,
            Implication::ExcludedDisagreement => s.excluded_method_disagreement += 1,
            Implication::NotApplicable => {}
        }
        match r.cone {
            ConeStatus::Consistent => {
                s.cone_checked += 1;
                s.cone_consistent += 1;
            }
            ConeStatus::Inconsistent => {
                s.cone_checked += 1;
                s.cone_inconsistent_indices.push(r.index);
            }
            _ => {}
        }
    }
    s
}

/// Worker count: `CSLAB_WORKERS`, then the sweep config, then the number of
/// available cores.
pub fn worker_count(spec: &SweepSpec) -> Result<usize, CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::config(WORKERS_ENV, format!("expected a positive integer, got {v:?}"))),
        };
    }
    Ok(spec.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)))
}

pub fn run_sweep(cfg: &RunConfig, art: &mut Artifacts) -> Result<i32, CliError> {
    let spec = cfg.sweep.clone().ok_or_else(|| CliError::config("sweep", "the sweep command needs a sweep section"))?;
    let workers = worker_count(&spec)?;
    let models = sample_models(&spec, cfg.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Numerical(format!("cannot start worker pool: {e}")))?;
    let dir = art.dir().to_path_buf();
    let results: Vec<(SweepRow, SampleFiles)> = art.timed("samples", || {
        pool.install(|| {
            models
                .into_par_iter()
                .enumerate()
                .map(|(k, m)| {
                    let (mut row, files) = run_sample(cfg, k, m);
                    for (rel, bytes) in &files {
                        let path = dir.join(rel);
                        let written =
                            path.parent().map_or(Ok(()), fs::create_dir_all).and_then(|_| fs::write(&path, bytes));
                        if let Err(e) = written {
                            row.flags.push(format!("write error: {}: {e}", path.display()));
                        }
                    }
                    (row, files)
                })
                .collect()
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for (row, files) in results {
        for (rel, bytes) in &files {
            art.record(rel, bytes);
        }
        rows.push(row);
    }
    let summary = summarize(&rows, cfg.grid.level, cfg.seed, workers);
    art.write("sweep.csv", sweep_csv(&rows).as_bytes())?;
    art.write_json("sweep_rows.json", &rows)?;
    art.write_json("sweep_summary.json", &summary)?;
    println!(
        "sweep: {} samples, {} convex with margin, {} counterexamples, {} excluded",
        summary.samples,
        summary.convex_with_margin,
        summary.counterexamples,
        summary.excluded_marginal_classification + summary.excluded_method_disagreement
    );
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_seeded_and_in_range() {
        let spec = SweepSpec { samples: 20, ..Default::default() };
        let a = sample_models(&spec, 7);
        assert_eq!(a, sample_models(&spec, 7));
        assert_ne!(a, sample_models(&spec, 8));
        for m in &a {
            let ModelSpec::LeslieGower(p) = m else { panic!() };
            assert!(p.lambda.iter().all(|l| (1.5..=4.0).contains(l)));
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        assert_eq!(p.a[i][j], 1.0);
                    } else {
                        assert!((0.2..=2.5).contains(&p.a[i][j]));
                    }
                }
            }
        }
    }

    #[test]
    fn csv_row_has_header_width() {
        let spec = SweepSpec { samples: 1, ..Default::default() };
        let mut row = SweepRow::new(0, sample_models(&spec, 0).remove(0));
        row.flags.push("a, b".into());
        let line = csv_row(&row);
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn summary_counts_counterexamples() {
        let spec = SweepSpec { samples: 3, ..Default::default() };
        let mut rows: Vec<SweepRow> =
            sample_models(&spec, 0).into_iter().enumerate().map(|(k, m)| SweepRow::new(k, m)).collect();
        rows[0].implication = Implication::Holds;
        rows[1].implication = Implication::Counterexample;
        rows[2].implication = Implication::ExcludedMarginal;
        let s = summarize(&rows, 32, 0, 1);
        assert_eq!((s.holds, s.counterexamples, s.excluded_marginal_classification), (1, 1, 1));
        assert_eq!(s.counterexample_indices, vec![1]);
    }
}
