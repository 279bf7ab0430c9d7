use rayon::prelude::*;
use serde::Serialize;

use super::optimizer::{optimize, OptimizeResult, OptimizerConfig, TraceRecord};
use super::{SearchError, TruthSpec};
use crate::semantics::{check_epsilon_complete, is_describable, is_separable, Metric};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityRow {
    pub metric: Metric,
    pub seed: u64,
    pub final_loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub guard_interventions: usize,
    /// Smallest epsilon at which the optimized model is epsilon-complete
    /// under its real satisfaction relation.
    pub min_epsilon: f64,
    pub model_describable: bool,
    pub model_separable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAggregate {
    pub metric: Metric,
    pub runs: usize,
    pub converged_runs: usize,
    pub min_final_loss: f64,
    pub median_final_loss: f64,
    pub min_min_epsilon: f64,
    pub median_min_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilitySummary {
    pub depth: usize,
    pub constraint_count: usize,
    pub describable_target: bool,
    pub separable_target: bool,
    pub rows: Vec<FeasibilityRow>,
    pub aggregates: Vec<MetricAggregate>,
}

/// One optimization run with its trace, as produced by [`feasibility_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityRun {
    pub metric: Metric,
    pub seed: u64,
    pub result: OptimizeResult,
}

impl FeasibilityRun {
    pub fn trace(&self) -> &[TraceRecord] {
        &self.result.trace
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs [`optimize`] for every (metric, seed) pair, re-audits each
/// optimized model, and aggregates per metric. Runs execute in parallel;
/// rows keep (metric, seed) input order.
pub fn feasibility_report(
    spec: &TruthSpec,
    metrics: &[Metric],
    seeds: &[u64],
    cfg: &OptimizerConfig,
    depth: usize,
) -> Result<(FeasibilitySummary, Vec<FeasibilityRun>), SearchError> {
    if metrics.is_empty() || seeds.is_empty() {
        return Err(SearchError::Param("metrics and seeds must be nonempty".into()));
    }
    let jobs: Vec<(Metric, u64)> =
        metrics.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let outcomes: Vec<Result<(FeasibilityRow, FeasibilityRun), SearchError>> = jobs
        .par_iter()
        .map(|&(metric, seed)| {
            let run_cfg = OptimizerConfig { metric, seed, ..*cfg };
            let result = optimize(spec, &run_cfg, depth)?;
            let eps = check_epsilon_complete(&result.model, 2.0, depth)?;
            let row = FeasibilityRow {
                metric,
                seed,
                final_loss: result.final_loss,
                converged: result.converged,
                iterations: result.iterations,
                guard_interventions: result.guard_interventions,
                min_epsilon: eps.min_epsilon,
                model_describable: is_describable(&result.model)?,
                model_separable: is_separable(&result.model)?,
            };
            Ok((row, FeasibilityRun { metric, seed, result }))
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len());
    let mut runs = Vec::with_capacity(jobs.len());
    for outcome in outcomes {
        let (row, run) = outcome?;
        rows.push(row);
        runs.push(run);
    }

    let mut aggregates = Vec::new();
    for &metric in metrics {
        if aggregates.iter().any(|a: &MetricAggregate| a.metric == metric) {
            continue;
        }
        let mine: Vec<&FeasibilityRow> = rows.iter().filter(|r| r.metric == metric).collect();
        let mut losses: Vec<f64> = mine.iter().map(|r| r.final_loss).collect();
        let mut eps: Vec<f64> = mine.iter().map(|r| r.min_epsilon).collect();
        aggregates.push(MetricAggregate {
            metric,
            runs: mine.len(),
            converged_runs: mine.iter().filter(|r| r.converged).count(),
            min_final_loss: losses.iter().copied().fold(f64::INFINITY, f64::min),
            median_final_loss: median(&mut losses),
            min_min_epsilon: eps.iter().copied().fold(f64::INFINITY, f64::min),
            median_min_epsilon: median(&mut eps),
        });
    }

    let constraint_count = runs.first().map_or(0, |r| r.result.constraint_count);
    Ok((
        FeasibilitySummary {
            depth,
            constraint_count,
            describable_target: spec.describable_target(),
            separable_target: spec.separable_target(),
            rows,
            aggregates,
        },
        runs,
    ))
}
