//! Pipeline stages. Each stage reads the previous stage's artifacts from the
//! output directory unless an explicit input path is given.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gpc_sense::adapter::{attach_logits, EvalMode, EvalRecord, EvalRequest, Evaluator, FnEvaluator, ProcessEvaluator};
use gpc_sense::basis::build_basis;
use gpc_sense::benchmarks::{run_benchmark, BenchmarkKind, BenchmarkOutcome};
use gpc_sense::perturb::{write_transformed_set, Image};
use gpc_sense::randomspace::{sample, SampleMatrix};
use gpc_sense::sobol::{compute_sobol, SobolReport};
use gpc_sense::surrogate::{fit, logistic, relative_rms, Surrogate};
use serde::Serialize;

use crate::config::{Context, GridRequest, GridScale};
use crate::error::{CliError, CliResult};
use crate::tables::{
    check_digest, digest_comment, evaluations_csv, read_digest, read_evaluations, read_manifest, read_text,
    write_text,
};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const IMAGES_DIR: &str = "images";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const EVALUATIONS_FILE: &str = "evaluations.csv";
pub const SURROGATE_FILE: &str = "surrogate.json";
pub const SOBOL_CSV_FILE: &str = "sobol.csv";
pub const SOBOL_JSON_FILE: &str = "sobol.json";
pub const GRID_FILE: &str = "grid.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn comments(digest: &str) -> Vec<String> {
    vec![digest_comment(digest)]
}

fn names(ctx: &Context) -> Vec<String> {
    ctx.config.parameters.iter().map(|p| p.name.clone()).collect()
}

/// Latin hypercube design in physical units.
pub fn cmd_sample(ctx: &Context) -> CliResult<PathBuf> {
    let space = ctx.config.space()?;
    let samples = sample(&space, ctx.config.sampling.n)?;
    let path = ctx.out_dir.join(SAMPLES_FILE);
    write_text(&path, &samples.to_csv(&comments(&ctx.digest)))?;
    Ok(path)
}

fn load_samples(ctx: &Context, path: &Path) -> CliResult<SampleMatrix<f64>> {
    let text = read_text(path)?;
    check_digest(path, &text, &ctx.digest)?;
    Ok(SampleMatrix::from_csv(ctx.config.space()?, &text)?)
}

/// One perturbed PNG per sample row plus `manifest.csv`. Returns the manifest path.
pub fn cmd_transform(ctx: &Context, samples_path: Option<&Path>) -> CliResult<PathBuf> {
    let spec = ctx
        .config
        .perturbation_spec()?
        .ok_or_else(|| CliError::Validation("transform needs an image-mode config".into()))?;
    let image_path = ctx.image_path().expect("image mode has an image path");
    // read the input before touching the output directory
    let img = Image::read_png(&image_path)?;
    let default = ctx.out_dir.join(SAMPLES_FILE);
    let samples = load_samples(ctx, samples_path.unwrap_or(&default))?;
    let dir = ctx.out_dir.join(IMAGES_DIR);
    write_transformed_set(&spec, &img, &samples, &ctx.config.geometry(), &dir, &comments(&ctx.digest))?;
    Ok(dir.join(MANIFEST_FILE))
}

/// Evaluator described by the config: an in-process builtin or a child process.
pub fn configured_evaluator(ctx: &Context) -> CliResult<Box<dyn Evaluator>> {
    if let Some(kind) = ctx.config.evaluator.builtin {
        return Ok(Box::new(FnEvaluator(move |x: &[f64]| kind.eval(x))));
    }
    let cfg = ctx.evaluator_config().expect("validated config has a command");
    Ok(Box::new(ProcessEvaluator::new(cfg)?))
}

fn build_requests(ctx: &Context, input: Option<&Path>) -> CliResult<Vec<EvalRequest>> {
    match ctx.config.mode {
        EvalMode::Numeric => {
            let default = ctx.out_dir.join(SAMPLES_FILE);
            let samples = load_samples(ctx, input.unwrap_or(&default))?;
            Ok(samples
                .rows()
                .enumerate()
                .map(|(index, row)| EvalRequest {
                    index,
                    xi: row.to_vec(),
                    image: None,
                })
                .collect())
        }
        EvalMode::Image => {
            let default = ctx.out_dir.join(IMAGES_DIR).join(MANIFEST_FILE);
            let path = input.unwrap_or(&default);
            let text = read_text(path)?;
            check_digest(path, &text, &ctx.digest)?;
            read_manifest(path, &text, &names(ctx))?
                .into_iter()
                .map(|row| {
                    let image = std::path::absolute(&row.file).map_err(|e| {
                        CliError::Validation(format!("bad image path {}: {e}", row.file.display()))
                    })?;
                    Ok(EvalRequest {
                        index: row.index,
                        xi: row.xi,
                        image: Some(image),
                    })
                })
                .collect()
        }
    }
}

/// Runs every sample through `evaluator` and writes `evaluations.csv`.
pub fn cmd_evaluate_with(ctx: &Context, input: Option<&Path>, evaluator: &mut dyn Evaluator) -> CliResult<PathBuf> {
    let requests = build_requests(ctx, input)?;
    let mut records = evaluator.evaluate(&requests)?;
    if ctx.config.mode == EvalMode::Image {
        let target = ctx.config.target_class.expect("validated image config has a target");
        attach_logits(&mut records, target, &ctx.config.link())?;
    }
    let path = ctx.out_dir.join(EVALUATIONS_FILE);
    let text = evaluations_csv(&names(ctx), ctx.config.mode, &records, &comments(&ctx.digest));
    write_text(&path, &text)?;
    Ok(path)
}

pub fn cmd_evaluate(ctx: &Context, input: Option<&Path>) -> CliResult<PathBuf> {
    let mut evaluator = configured_evaluator(ctx)?;
    cmd_evaluate_with(ctx, input, evaluator.as_mut())
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub path: PathBuf,
    pub surrogate: Surrogate<f64>,
    /// Error of the target-class probability after mapping predictions back
    /// through the logistic function. Image mode only.
    pub probability_nrmsd: Option<f64>,
}

fn fit_targets(records: &[EvalRecord]) -> CliResult<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.target()
                .ok_or_else(|| CliError::Validation(format!("evaluation {} has no target value", r.index)))
        })
        .collect()
}

/// Least squares surrogate of the evaluation targets; writes `surrogate.json`.
pub fn cmd_fit(ctx: &Context, evaluations: Option<&Path>) -> CliResult<FitOutcome> {
    let default = ctx.out_dir.join(EVALUATIONS_FILE);
    let path = evaluations.unwrap_or(&default);
    let text = read_text(path)?;
    check_digest(path, &text, &ctx.digest)?;
    let mut records = read_evaluations(path, &text, &names(ctx), ctx.config.mode)?;
    records.sort_by_key(|r| r.index);
    if records.is_empty() {
        return Err(CliError::Validation(format!("{} has no rows", path.display())));
    }

    let space = ctx.config.space()?;
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.xi_phys.clone()).collect();
    let samples = SampleMatrix::from_rows(space.clone(), &rows)?;
    let y = fit_targets(&records)?;
    let basis = build_basis(space.dimension(), space.jacobi_params(), ctx.config.basis.clone())?;
    let surrogate = fit(&basis, &space, &samples, &y)?;

    let probability_nrmsd = match (ctx.config.mode, ctx.config.target_class) {
        (EvalMode::Image, Some(k)) => {
            let p: Vec<f64> = records
                .iter()
                .map(|r| r.probs.as_ref().map_or(f64::NAN, |v| v[k]))
                .collect();
            let predicted: Vec<f64> = surrogate.predict_samples(&samples)?.into_iter().map(logistic).collect();
            relative_rms(&p, &predicted).ok()
        }
        _ => None,
    };

    let out = ctx.out_dir.join(SURROGATE_FILE);
    write_text(&out, &surrogate.to_json(Some(&ctx.digest))?)?;
    Ok(FitOutcome {
        path: out,
        surrogate,
        probability_nrmsd,
    })
}

#[derive(Debug, Clone)]
pub struct SobolOutcome {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub report: SobolReport<f64>,
}

/// Sobol indices of a stored surrogate. With `cross_check`, the samples
/// file must carry the same config digest as the surrogate.
pub fn cmd_sobol(
    surrogate_path: &Path,
    cross_check: Option<&Path>,
    expected_digest: Option<&str>,
    out_dir: &Path,
) -> CliResult<SobolOutcome> {
    let (surrogate, digest) = Surrogate::<f64>::read(surrogate_path)?;
    if let Some(expected) = expected_digest {
        if digest.as_deref() != Some(expected) {
            return Err(CliError::Validation(format!(
                "{} does not match the current configuration",
                surrogate_path.display()
            )));
        }
    }
    if let Some(samples_path) = cross_check {
        let text = read_text(samples_path)?;
        let theirs = read_digest(&text);
        if digest.is_none() || theirs != digest {
            return Err(CliError::Validation(format!(
                "config digest mismatch: {} has {}, {} has {}",
                surrogate_path.display(),
                digest.as_deref().unwrap_or("none"),
                samples_path.display(),
                theirs.as_deref().unwrap_or("none"),
            )));
        }
    }
    let report = compute_sobol(&surrogate)?;
    let notes: Vec<String> = digest.iter().map(|d| digest_comment(d)).collect();
    let csv = out_dir.join(SOBOL_CSV_FILE);
    let json = out_dir.join(SOBOL_JSON_FILE);
    write_text(&csv, &report.to_csv(&notes))?;
    write_text(&json, &report.to_json(digest.as_deref())?)?;
    Ok(SobolOutcome { csv, json, report })
}

/// Logistic value kept strictly inside (0, 1).
fn probability(z: f64) -> f64 {
    logistic(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Surrogate surface over two parameters, `resolution^2` rows.
pub fn grid_csv(surrogate: &Surrogate<f64>, req: &GridRequest, digest: Option<&str>) -> CliResult<String> {
    let space = surrogate.space();
    let axis = |i: usize| -> Vec<f64> {
        let p = &space.parameters[i];
        let last = (req.resolution - 1) as f64;
        (0..req.resolution)
            .map(|k| {
                if k + 1 == req.resolution {
                    p.upper
                } else {
                    p.lower + p.width() * (k as f64 / last)
                }
            })
            .collect()
    };
    let (xs, ys) = (axis(req.x), axis(req.y));
    let mut out = String::new();
    if let Some(d) = digest {
        let _ = writeln!(out, "# {}", digest_comment(d));
    }
    let scale = match req.scale {
        GridScale::Logit => "logit",
        GridScale::Probability => "probability",
    };
    let _ = writeln!(out, "# scale={scale}");
    let _ = writeln!(out, "{},{},value", space.parameters[req.x].name, space.parameters[req.y].name);
    let mut point = req.fixed.clone();
    for &x in &xs {
        for &y in &ys {
            point[req.x] = x;
            point[req.y] = y;
            let z = surrogate.predict(&point)?;
            let v = match req.scale {
                GridScale::Logit => z,
                GridScale::Probability => probability(z),
            };
            let _ = writeln!(out, "{x},{y},{v}");
        }
    }
    Ok(out)
}

pub fn cmd_grid(surrogate_path: &Path, req: &GridRequest, out_path: &Path) -> CliResult<PathBuf> {
    let (surrogate, digest) = Surrogate::<f64>::read(surrogate_path)?;
    write_text(out_path, &grid_csv(&surrogate, req, digest.as_deref())?)?;
    Ok(out_path.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config_digest: String,
    pub status: RunStatus,
    pub mode: EvalMode,
    pub n_samples: usize,
    /// Artifacts written by completed stages, relative to the output directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_sample_nrmsd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_nrmsd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability_nrmsd: Option<f64>,
    /// First-order index of every parameter, by name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_order: Option<std::collections::BTreeMap<String, f64>>,
}

fn relative(ctx: &Context, path: &Path) -> String {
    path.strip_prefix(&ctx.out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Full pipeline with the given evaluator. `summary.json` is written on
/// success and on failure; a failed run lists the stages that completed.
pub fn cmd_run_with(ctx: &Context, evaluator: &mut dyn Evaluator) -> CliResult<RunSummary> {
    let mut summary = RunSummary {
        config_digest: ctx.digest.clone(),
        status: RunStatus::Failed,
        mode: ctx.config.mode,
        n_samples: ctx.config.sampling.n,
        artifacts: Vec::new(),
        failed_stage: None,
        error: None,
        basis_terms: None,
        in_sample_nrmsd: None,
        holdout_nrmsd: None,
        probability_nrmsd: None,
        first_order: None,
    };
    let result = run_stages(ctx, evaluator, &mut summary);
    if let Err((stage, e)) = &result {
        summary.failed_stage = Some(stage.to_string());
        summary.error = Some(e.to_string());
    } else {
        summary.status = RunStatus::Complete;
    }
    let mut text = serde_json::to_string_pretty(&summary).map_err(gpc_sense::Error::from)?;
    text.push('\n');
    write_text(&ctx.out_dir.join(SUMMARY_FILE), &text)?;
    result.map(|_| summary).map_err(|(_, e)| e)
}

fn run_stages(
    ctx: &Context,
    evaluator: &mut dyn Evaluator,
    summary: &mut RunSummary,
) -> Result<(), (&'static str, CliError)> {
    let samples = cmd_sample(ctx).map_err(|e| ("sample", e))?;
    summary.artifacts.push(relative(ctx, &samples));
    if ctx.config.mode == EvalMode::Image {
        let manifest = cmd_transform(ctx, None).map_err(|e| ("transform", e))?;
        summary.artifacts.push(format!("{IMAGES_DIR}/sample_*.png"));
        summary.artifacts.push(relative(ctx, &manifest));
    }
    let evals = cmd_evaluate_with(ctx, None, evaluator).map_err(|e| ("evaluate", e))?;
    summary.artifacts.push(relative(ctx, &evals));

    let fitted = cmd_fit(ctx, None).map_err(|e| ("fit", e))?;
    summary.artifacts.push(relative(ctx, &fitted.path));
    summary.basis_terms = Some(fitted.surrogate.basis().len());
    if let Some(info) = fitted.surrogate.fit_info() {
        summary.in_sample_nrmsd = info.in_sample_nrmsd;
        summary.holdout_nrmsd = info.holdout_nrmsd;
    }
    summary.probability_nrmsd = fitted.probability_nrmsd;

    let sobol = cmd_sobol(&fitted.path, Some(&samples), Some(&ctx.digest), &ctx.out_dir).map_err(|e| ("sobol", e))?;
    summary.artifacts.push(relative(ctx, &sobol.csv));
    summary.artifacts.push(relative(ctx, &sobol.json));
    summary.first_order = Some(
        sobol
            .report
            .names
            .iter()
            .cloned()
            .zip(sobol.report.first_order())
            .collect(),
    );

    if let Some(g) = &ctx.config.grid {
        let stage = |e| ("grid", e);
        let req = GridRequest::from_section(g, fitted.surrogate.space()).map_err(stage)?;
        let path = cmd_grid(&fitted.path, &req, &ctx.out_dir.join(GRID_FILE)).map_err(stage)?;
        summary.artifacts.push(relative(ctx, &path));
    }
    Ok(())
}

pub fn cmd_run(ctx: &Context) -> CliResult<RunSummary> {
    let mut evaluator = configured_evaluator(ctx)?;
    cmd_run_with(ctx, evaluator.as_mut())
}

/// Default sample size and order used when the benchmark flags are omitted.
pub fn benchmark_defaults(kind: BenchmarkKind) -> (usize, usize) {
    match kind {
        BenchmarkKind::Ishigami => (1500, 8),
        BenchmarkKind::Gfunction => (3000, 6),
    }
}

pub fn cmd_benchmark(kind: BenchmarkKind, n: Option<usize>, order: Option<usize>, seed: u64) -> CliResult<BenchmarkOutcome> {
    let (dn, dorder) = benchmark_defaults(kind);
    Ok(run_benchmark(kind, n.unwrap_or(dn), order.unwrap_or(dorder), seed)?)
}
