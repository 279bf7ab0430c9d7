//! `clipcoh`: generate CLIP-like models, audit their logical coherence,
//! certify incompleteness and run feasibility searches.
//!
//! Every command is a function returning its exit status so the binary and
//! the tests share one code path. Exit codes: 0 complete / success,
//! 1 incomplete (or a rejected replay), 2 input or parameter error.

mod manifest;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use clip_coherence::io::{format_f64, to_json_pretty};
use clip_coherence::logic::{enumerate_descriptions, Vocabulary};
use clip_coherence::search::{
    feasibility_report, random_config, trace_csv, Margins, OptimizerConfig, TargetMode, TruthSpec,
};
use clip_coherence::semantics::{
    check_complete_with, check_epsilon_complete_with, find_violation, ray_analysis, verify_certificate,
    AuditOptions, CheckResult, ClipLikeModel, CoherenceReport, EpsilonReport, Metric, RayAnalysis,
    ViolationCertificate,
};

pub use manifest::{read_input, sha256_hex, write_atomic, RunManifest};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INCOMPLETE: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "clipcoh", version, about = "Logical coherence audits for CLIP-like embedding models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random model and truth spec
    Gen(GenArgs),
    /// Check a model for completeness; exit 0 complete, 1 incomplete
    Audit(AuditArgs),
    /// Produce (or replay) an incompleteness certificate
    Certify(CertifyArgs),
    /// Gradient search for embeddings meeting a truth spec
    Optimize(OptimizeArgs),
    /// List the canonical caption strings up to a depth
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    pub n_images: usize,
    pub n_atoms: usize,
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resample the target until describable and separable.
    #[arg(long)]
    pub separable: bool,
    /// Caption coverage of the generated model.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Output directory; receives model.json and spec.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    pub model: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Judge completeness at this relaxation instead of `--tol`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Require alpha = -1 for every false enumerated description.
    #[arg(long)]
    pub extended_negation: bool,
    /// Structured report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    pub model: PathBuf,
    /// Depth of the companion audit; the certificate itself uses depth 1.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-check an existing certificate against the model instead.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    pub spec: PathBuf,
    /// Comma-separated: cosine, dot, negative-euclidean.
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Comma list and/or ranges: `0..20`, `3..=5`, `1,4,9`.
    #[arg(long, alias = "seed", default_value = "0")]
    pub seeds: String,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub convergence_tol: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Negative-euclidean: true pairs want similarity >= this.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub margin_true: f64,
    /// Negative-euclidean: false pairs want similarity <= this.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub margin_false: f64,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EnumerateArgs {
    #[arg(required = true)]
    pub atoms: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub depth: usize,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_ERROR
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Certify(a) => cmd_certify(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Enumerate(a) => cmd_enumerate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    Ok(to_json_pretty(value)?.into_bytes())
}

fn load_model(path: &Path) -> Result<(ClipLikeModel, Vec<u8>)> {
    let (text, bytes) = read_input(path)?;
    let model = ClipLikeModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))?;
    Ok((model, bytes))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn short(x: f64) -> String {
    format!("{x:.6}")
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<u8> {
    let mode = if a.separable { TargetMode::Separable } else { TargetMode::Unconstrained };
    let rc = random_config(a.n_images, a.n_atoms, a.dim, a.seed, mode, a.depth)?;
    let manifest = serde_json::to_value(RunManifest::new("gen", a, vec![a.seed])?)?;
    let model_path = a.out.join("model.json");
    let spec_path = a.out.join("spec.json");
    write_atomic(&model_path, &json(&rc.model.to_file(Some(manifest.clone())))?)?;
    write_atomic(&spec_path, &json(&rc.spec.to_file(Some(manifest)))?)?;
    writeln!(out, "wrote {} and {}", model_path.display(), spec_path.display())?;
    writeln!(
        out,
        "target: describable {}, separable {}; model: describable {}, separable {}",
        yes_no(rc.spec.describable_target()),
        yes_no(rc.spec.separable_target()),
        yes_no(rc.model_describable),
        yes_no(rc.model_separable)
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    manifest: RunManifest,
    complete: bool,
    report: &'a CoherenceReport,
    rays: &'a RayAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<EpsilonSummary>,
}

#[derive(Serialize)]
struct EpsilonSummary {
    epsilon: f64,
    passes: bool,
    min_epsilon: f64,
}

fn check_row(name: &str, c: &CheckResult) -> String {
    let witness = c
        .witness
        .as_ref()
        .map_or_else(|| "-".to_string(), |w| format!("{} / {} (alpha {})", w.image, w.description, short(w.alpha)));
    let status = if c.vacuous { "vacuous" } else { yes_no(c.holds) };
    format!("  {name:<12} {status:<8} {:>7}  {:>12}  {witness}", c.checked, format!("{:.3e}", c.worst_violation))
}

pub fn cmd_audit(a: &AuditArgs, out: &mut dyn Write) -> Result<u8> {
    let (model, bytes) = load_model(&a.model)?;
    let opts = AuditOptions { depth: a.depth, tol: a.tol, extended_negation: a.extended_negation };
    let eps: Option<EpsilonReport> = match a.epsilon {
        Some(e) => Some(check_epsilon_complete_with(&model, e, &opts)?),
        None => None,
    };
    let report = match &eps {
        Some(e) => e.report.clone(),
        None => check_complete_with(&model, &opts)?,
    };
    let rays = ray_analysis(&model, a.depth, a.tol)?;
    let complete = eps.as_ref().map_or(report.complete, |e| e.passes);

    let mut t = String::new();
    writeln!(
        t,
        "model {} ({}, dim {}, {} images, {} atoms)",
        a.model.display(),
        model.metric(),
        model.dim(),
        model.images().len(),
        model.vocabulary().len()
    )?;
    match &eps {
        Some(e) => writeln!(t, "depth {}, epsilon {} (smallest passing: {})", a.depth, e.epsilon, short(e.min_epsilon))?,
        None => writeln!(t, "depth {}, tol {:e}", a.depth, a.tol)?,
    }
    writeln!(t, "  {:<12} {:<8} {:>7}  {:>12}  witness", "condition", "holds", "checked", "worst")?;
    for (name, c) in report.checks() {
        writeln!(t, "{}", check_row(name, c))?;
    }
    writeln!(t, "describable {}, separable {}", yes_no(report.describable), yes_no(report.separable))?;
    writeln!(
        t,
        "agreement {} ({}/{} pairs), exact ties {}",
        short(report.agreement_score),
        report.agreeing_pairs,
        report.pair_count,
        report.ties.len()
    )?;
    writeln!(
        t,
        "rays: {} true points colinear {} (min cosine {}), {} false points colinear {} (min cosine {})",
        rays.true_count,
        yes_no(rays.colinear_true),
        short(rays.min_cosine_true),
        rays.false_count,
        yes_no(rays.colinear_false),
        short(rays.min_cosine_false)
    )?;
    if !rays.conflicts.is_empty() {
        writeln!(t, "captions forced onto both rays: {}", rays.conflicts.len())?;
    }
    writeln!(t, "verdict: {}", if complete { "COMPLETE" } else { "INCOMPLETE" })?;
    out.write_all(t.as_bytes())?;

    if let Some(path) = &a.out {
        let manifest = RunManifest::new("audit", a, vec![])?.with_input(&a.model, &bytes);
        let doc = AuditOutput {
            manifest,
            complete,
            report: &report,
            rays: &rays,
            epsilon: eps.as_ref().map(|e| EpsilonSummary {
                epsilon: e.epsilon,
                passes: e.passes,
                min_epsilon: e.min_epsilon,
            }),
        };
        write_atomic(path, &json(&doc)?)?;
    }
    Ok(if complete { EXIT_OK } else { EXIT_INCOMPLETE })
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    manifest: RunManifest,
    certificate: &'a ViolationCertificate,
    /// Completeness verdict of the companion audit at `depth`.
    audit_complete: bool,
}

fn describe_certificate(cert: &ViolationCertificate) -> Result<String> {
    let n = &cert.narrative;
    let mut t = String::new();
    writeln!(t, "i = {} satisfies d = {}", n.i, n.d)?;
    writeln!(t, "j = {} satisfies {}, so e = {}", n.j, n.j_models, n.e)?;
    for (k, s) in cert.chain.iter().enumerate() {
        let mark = if s.satisfied { "ok" } else { "FAIL" };
        writeln!(
            t,
            "  [{mark:>4}] {:<11} alpha({}, {}) = {}  (required {:+})",
            s.clause.to_string(),
            s.image,
            s.description,
            short(s.alpha),
            s.required
        )?;
        if k == cert.failing_step {
            break;
        }
    }
    let step = &cert.chain[cert.failing_step];
    writeln!(
        t,
        "violation: {} clause fails at {} / {} with alpha {}",
        cert.kind,
        step.image,
        step.description,
        format_f64(step.alpha)
    )?;
    Ok(t)
}

pub fn cmd_certify(a: &CertifyArgs, out: &mut dyn Write) -> Result<u8> {
    let (model, bytes) = load_model(&a.model)?;
    if let Some(path) = &a.replay {
        let (text, _) = read_input(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let body = value.get("certificate").cloned().unwrap_or(value);
        let cert: ViolationCertificate =
            serde_json::from_value(body).with_context(|| format!("reading certificate {}", path.display()))?;
        return match verify_certificate(&model, &cert) {
            Ok(()) => {
                writeln!(out, "verified")?;
                Ok(EXIT_OK)
            }
            Err(reason) => {
                writeln!(out, "rejected: {reason}")?;
                Ok(EXIT_INCOMPLETE)
            }
        };
    }
    let cert = find_violation(&model, a.tol)?;
    verify_certificate(&model, &cert).map_err(|e| anyhow!("fresh certificate failed replay: {e}"))?;
    let opts = AuditOptions { depth: a.depth, tol: a.tol, extended_negation: false };
    let audit_complete = check_complete_with(&model, &opts)?.complete;
    if audit_complete {
        bail!("certificate found but the audit at depth {} reports completeness", a.depth);
    }
    out.write_all(describe_certificate(&cert)?.as_bytes())?;
    if let Some(path) = &a.out {
        let manifest = RunManifest::new("certify", a, vec![])?.with_input(&a.model, &bytes);
        write_atomic(path, &json(&CertifyOutput { manifest, certificate: &cert, audit_complete })?)?;
    }
    Ok(EXIT_OK)
}

/// Parses `0..20`, `3..=5`, `1,4,9` and mixtures.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..=") {
            seeds.extend(lo.trim().parse::<u64>()?..=hi.trim().parse::<u64>()?);
        } else if let Some((lo, hi)) = part.split_once("..") {
            seeds.extend(lo.trim().parse::<u64>()?..hi.trim().parse::<u64>()?);
        } else {
            seeds.push(part.parse::<u64>().with_context(|| format!("bad seed {part:?}"))?);
        }
    }
    if seeds.is_empty() {
        bail!("no seeds in {text:?}");
    }
    Ok(seeds)
}

pub fn parse_metrics(text: &str) -> Result<Vec<Metric>> {
    let metrics: Vec<Metric> = text
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<Metric>().map_err(|e| anyhow!(e)))
        .collect::<Result<_>>()?;
    if metrics.is_empty() {
        bail!("no metrics in {text:?}");
    }
    Ok(metrics)
}

#[derive(Serialize)]
struct SummaryOutput<'a> {
    manifest: RunManifest,
    config: OptimizerConfig,
    traces: Vec<String>,
    models: Vec<String>,
    summary: &'a clip_coherence::search::FeasibilitySummary,
}

pub fn cmd_optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Result<u8> {
    let (text, bytes) = read_input(&a.spec)?;
    let spec = TruthSpec::from_json(&text).with_context(|| format!("loading spec {}", a.spec.display()))?;
    let metrics = parse_metrics(&a.metric)?;
    let seeds = parse_seeds(&a.seeds)?;
    let cfg = OptimizerConfig {
        step_size: a.step_size,
        max_iters: a.max_iters,
        seed: seeds[0],
        convergence_tol: a.convergence_tol,
        metric: metrics[0],
        dim: a.dim,
        momentum: a.momentum,
        margins: Margins { true_pair: a.margin_true, false_pair: a.margin_false },
    };
    cfg.validate()?;
    let (summary, runs) = feasibility_report(&spec, &metrics, &seeds, &cfg, a.depth)?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest = RunManifest::new("optimize", a, seeds.clone())?.with_input(&a.spec, &bytes);
    let manifest_value = serde_json::to_value(&manifest)?;
    let mut traces = Vec::new();
    let mut models = Vec::new();
    for run in &runs {
        let stem = format!("{}_seed{}", run.metric, run.seed);
        let trace_name = format!("trace_{stem}.csv");
        write_atomic(&a.out.join(&trace_name), trace_csv(run.trace()).as_bytes())?;
        let model_name = format!("model_{stem}.json");
        write_atomic(&a.out.join(&model_name), &json(&run.result.model.to_file(Some(manifest_value.clone())))?)?;
        traces.push(trace_name);
        models.push(model_name);
    }
    let doc = SummaryOutput { manifest, config: cfg, traces, models, summary: &summary };
    write_atomic(&a.out.join("summary.json"), &json(&doc)?)?;

    let mut t = String::new();
    writeln!(
        t,
        "{} constraints at depth {}; target describable {}, separable {}",
        summary.constraint_count,
        summary.depth,
        yes_no(summary.describable_target),
        yes_no(summary.separable_target)
    )?;
    writeln!(t, "  {:<18} {:>6} {:>14} {:>9} {:>6} {:>6} {:>12}", "metric", "seed", "final loss", "converged", "iters", "guard", "min eps")?;
    for r in &summary.rows {
        writeln!(
            t,
            "  {:<18} {:>6} {:>14.6e} {:>9} {:>6} {:>6} {:>12.6}",
            r.metric.to_string(),
            r.seed,
            r.final_loss,
            yes_no(r.converged),
            r.iterations,
            r.guard_interventions,
            r.min_epsilon
        )?;
    }
    for g in &summary.aggregates {
        writeln!(
            t,
            "{}: final loss min {:.6e} median {:.6e}; min epsilon min {} median {}",
            g.metric,
            g.min_final_loss,
            g.median_final_loss,
            short(g.min_min_epsilon),
            short(g.median_min_epsilon)
        )?;
    }
    writeln!(t, "wrote {}", a.out.join("summary.json").display())?;
    out.write_all(t.as_bytes())?;
    Ok(EXIT_OK)
}

pub fn cmd_enumerate(a: &EnumerateArgs, out: &mut dyn Write) -> Result<u8> {
    let vocab = Vocabulary::from_strs(&a.atoms)?;
    let mut text = String::new();
    for d in enumerate_descriptions(&vocab, a.depth)? {
        text.push_str(&d.render());
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}
