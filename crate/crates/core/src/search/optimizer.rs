use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::constraints::{build_constraints, Objective};
use super::{SearchError, TruthSpec};
use crate::geometry::{norm, LatentVector, ZERO_NORM};
use crate::semantics::{required_captions, ClipLikeModel, Metric};

/// Vectors shorter than this are pushed back out by the guard.
pub const GUARD_MIN_NORM: f64 = 1e-6;
/// Norm the guard restores.
pub const GUARD_RESET_NORM: f64 = 1e-3;
/// Step halvings tried before an iteration gives up.
pub const MAX_HALVINGS: usize = 30;
/// Cap on the adaptive step, as a multiple of `step_size`.
const MAX_STEP_GROWTH: f64 = 1048576.0;

/// Hinge margins for the negative-euclidean metric, in similarity units
/// (`sim = -distance`): true pairs want `sim >= true_pair`, false pairs
/// want `sim <= false_pair`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    pub true_pair: f64,
    pub false_pair: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { true_pair: -1.0, false_pair: -2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once an accepted step lowers the loss by less than this.
    pub convergence_tol: f64,
    pub metric: Metric,
    /// Latent dimension of the searched embeddings.
    pub dim: usize,
    /// Heavy-ball coefficient; 0 is plain gradient descent.
    pub momentum: f64,
    pub margins: Margins,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 0.05,
            max_iters: 5000,
            seed: 0,
            convergence_tol: 1e-10,
            metric: Metric::Cosine,
            // in the plane, two images sharing every caption can lock into
            // an antipodal local minimum; one extra dimension turns it into
            // a saddle
            dim: 3,
            momentum: 0.0,
            margins: Margins::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(SearchError::Param(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(SearchError::Param("max_iters must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(SearchError::Param("dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SearchError::Param(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(SearchError::Param("convergence tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub model: ClipLikeModel,
    pub final_loss: f64,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub guard_interventions: usize,
    pub constraint_count: usize,
}

/// Re-projects every vector of `trial` whose norm fell below
/// [`GUARD_MIN_NORM`] onto norm [`GUARD_RESET_NORM`] along the direction it
/// had in `from`.
fn guard(trial: &mut [f64], from: &[f64], dim: usize) -> usize {
    let mut hits = 0;
    for (t, f) in trial.chunks_mut(dim).zip(from.chunks(dim)) {
        if norm(t) < GUARD_MIN_NORM {
            let n = norm(f).max(ZERO_NORM);
            for (ti, fi) in t.iter_mut().zip(f) {
                *ti = fi / n * GUARD_RESET_NORM;
            }
            hits += 1;
        }
    }
    hits
}

fn unit_normal_draws(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count * dim);
    for _ in 0..count {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = norm(&v);
            if n >= ZERO_NORM {
                out.extend(v.into_iter().map(|c| c / n));
                break;
            }
        }
    }
    out
}

/// Searches for embeddings meeting the constraints of `spec` at `depth`.
///
/// Embeddings start from a seeded unit-normal draw normalized to unit
/// length. Each iteration takes a gradient step, halving it until the loss
/// strictly decreases (at most [`MAX_HALVINGS`] times); an accepted first
/// try doubles the next step. The loss sequence is therefore non-increasing.
/// The returned model embeds every caption needed to audit it at `depth`.
pub fn optimize(spec: &TruthSpec, cfg: &OptimizerConfig, depth: usize) -> Result<OptimizeResult, SearchError> {
    cfg.validate()?;
    let constraints = build_constraints(spec, depth)?;
    let captions = required_captions(spec.atoms(), depth)?;
    let caption_keys: Vec<String> = captions.iter().map(|d| d.render()).collect();
    let image_ids: Vec<&str> = spec.images().iter().map(String::as_str).collect();
    let key_refs: Vec<&str> = caption_keys.iter().map(String::as_str).collect();
    let obj = Objective::compile(&image_ids, &key_refs, cfg.dim, cfg.metric, cfg.margins, &constraints)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = unit_normal_draws(&mut rng, image_ids.len() + key_refs.len(), cfg.dim);
    debug_assert_eq!(x.len(), obj.len());

    let mut grad = vec![0.0; x.len()];
    let mut loss = obj.loss_grad(&x, &mut grad);
    let mut grad_norm = norm(&grad);
    let mut trace = vec![TraceRecord { iteration: 0, loss, grad_norm }];
    let mut velocity = vec![0.0; x.len()];
    let mut trial = vec![0.0; x.len()];
    let mut step = cfg.step_size;
    let mut converged = loss == 0.0;
    let mut guard_interventions = 0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            for k in 0..x.len() {
                trial[k] = x[k] + cfg.momentum * velocity[k] - step * grad[k];
            }
            let hits = guard(&mut trial, &x, cfg.dim);
            let trial_loss = obj.loss(&trial);
            if trial_loss < loss {
                accepted = Some((trial_loss, hits, halving));
                break;
            }
            step *= 0.5;
        }
        let Some((new_loss, hits, halvings)) = accepted else {
            // no descent direction at floating-point resolution
            converged = true;
            trace.push(TraceRecord { iteration: iterations, loss, grad_norm });
            break;
        };
        for k in 0..x.len() {
            velocity[k] = trial[k] - x[k];
        }
        std::mem::swap(&mut x, &mut trial);
        guard_interventions += hits;
        let decrease = loss - new_loss;
        obj.loss_grad(&x, &mut grad);
        loss = new_loss;
        grad_norm = norm(&grad);
        trace.push(TraceRecord { iteration: iterations, loss, grad_norm });
        if halvings == 0 {
            step = (step * 2.0).min(cfg.step_size * MAX_STEP_GROWTH);
        }
        if cfg.momentum == 0.0 {
            velocity.iter_mut().for_each(|v| *v = 0.0);
        }
        converged = decrease < cfg.convergence_tol || loss == 0.0;
    }

    let dim = cfg.dim;
    let mut images = IndexMap::new();
    for (k, id) in image_ids.iter().enumerate() {
        images.insert(id.to_string(), LatentVector::new(x[k * dim..(k + 1) * dim].to_vec())?);
    }
    let n = image_ids.len();
    let mut caption_table = IndexMap::new();
    for (k, key) in caption_keys.into_iter().enumerate() {
        caption_table.insert(key, LatentVector::new(x[(n + k) * dim..(n + k + 1) * dim].to_vec())?);
    }
    let model = ClipLikeModel::new(cfg.dim, cfg.metric, spec.atoms().clone(), images, caption_table)?;
    Ok(OptimizeResult {
        model,
        final_loss: loss,
        trace,
        converged,
        iterations,
        guard_interventions,
        constraint_count: constraints.len(),
    })
}

/// Trace as CSV with header `iteration,loss,grad_norm`.
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iteration,loss,grad_norm\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{}\n",
            r.iteration,
            crate::io::format_f64(r.loss),
            crate::io::format_f64(r.grad_norm)
        ));
    }
    out
}
