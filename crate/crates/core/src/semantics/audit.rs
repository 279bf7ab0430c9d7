//! Coherence audits: the four respects-* conditions, describability and
//! separability, the satisfaction/entailment agreement score, relaxed
//! (epsilon) completeness, and the ray analysis.
//!
//! Scans visit descriptions in enumeration order and, for each description,
//! images in model order. The first violating pair in that order is the
//! reported witness.

use serde::Serialize;

use super::{
    alpha_key, entailment_detail, models_atom, required_captions, satisfies, ClipLikeModel, Metric,
    SemanticsError,
};
use crate::geometry::{min_pairwise_cosine, ray_of, LatentVector, Ray};
use crate::logic::{enumerate_descriptions, Atom, Description};

/// Slack for the `alpha = +1` / `alpha = -1` conditions.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Depth of the compound descriptions scanned by default.
pub const DEFAULT_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub depth: usize,
    pub tol: f64,
    /// Enforce the negation condition on every enumerated description, not
    /// only on atoms.
    pub extended_negation: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { depth: DEFAULT_DEPTH, tol: DEFAULT_TOL, extended_negation: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub image: String,
    pub description: Description,
    pub alpha: f64,
}

/// Outcome of one respects-* condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub holds: bool,
    /// No (image, description) pair satisfied the antecedent.
    pub vacuous: bool,
    /// Number of pairs that satisfied the antecedent.
    pub checked: usize,
    /// Largest distance from the required value (`1 - alpha` or
    /// `alpha + 1`); 0 when vacuous.
    pub worst_violation: f64,
    /// First pair, in scan order, whose violation exceeds the tolerance.
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiePair {
    pub image: String,
    pub description: Description,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub metric: Metric,
    pub depth: usize,
    pub tol: f64,
    pub extended_negation: bool,
    pub pair_count: usize,
    pub agreeing_pairs: usize,
    pub agreement_score: f64,
    pub respects_basic: CheckResult,
    pub respects_negation: CheckResult,
    pub respects_disjunction: CheckResult,
    pub respects_conjunction: CheckResult,
    pub describable: bool,
    pub separable: bool,
    pub complete: bool,
    /// Pairs with `alpha(i, d) == alpha(i, not d)` exactly; neither `d` nor
    /// its entailment holds there.
    pub ties: Vec<TiePair>,
}

impl CoherenceReport {
    pub fn checks(&self) -> [(&'static str, &CheckResult); 4] {
        [
            ("basic", &self.respects_basic),
            ("negation", &self.respects_negation),
            ("disjunction", &self.respects_disjunction),
            ("conjunction", &self.respects_conjunction),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub passes: bool,
    /// Smallest epsilon at which every condition passes.
    pub min_epsilon: f64,
    pub report: CoherenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayAnalysis {
    /// Points that must share one ray under completeness: every image
    /// embedding and every caption true of some image.
    pub true_count: usize,
    /// Atom captions false of some image.
    pub false_count: usize,
    pub colinear_true: bool,
    pub colinear_false: bool,
    pub min_cosine_true: f64,
    pub min_cosine_false: f64,
    pub true_ray: Option<Ray>,
    pub false_ray: Option<Ray>,
    /// Whether the fitted false ray is the anti-ray of the true ray, when
    /// both exist.
    pub rays_opposed: Option<bool>,
    /// Descriptions whose caption lies in both sets.
    pub conflicts: Vec<Description>,
}

/// Atomic satisfaction for every (image, atom), computed once.
struct TruthTable<'m> {
    model: &'m ClipLikeModel,
    images: Vec<&'m str>,
    atomic: Vec<Vec<bool>>,
}

impl<'m> TruthTable<'m> {
    fn new(model: &'m ClipLikeModel) -> Result<Self, SemanticsError> {
        let images: Vec<&str> = model.image_ids().collect();
        let atomic = images
            .iter()
            .map(|i| {
                model
                    .vocabulary()
                    .atoms()
                    .iter()
                    .map(|a| models_atom(model, i, a))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TruthTable { model, images, atomic })
    }

    fn atom(&self, image: usize, a: &Atom) -> Result<bool, SemanticsError> {
        let k = self
            .model
            .vocabulary()
            .position(a)
            .ok_or_else(|| SemanticsError::MissingCaptions(vec![a.to_string()]))?;
        Ok(self.atomic[image][k])
    }

    fn holds(&self, image: usize, d: &Description) -> Result<bool, SemanticsError> {
        satisfies(d, &mut |a| self.atom(image, a))
    }
}

fn require_images(model: &ClipLikeModel) -> Result<(), SemanticsError> {
    if model.images().is_empty() {
        return Err(SemanticsError::Config("the model has no images".into()));
    }
    Ok(())
}

/// Scans `descs` x images. Pairs where `i |= d` (or `i |= not d` when
/// `antecedent_true` is false) must have `alpha(i, d)` within `tol` of
/// `target`.
fn scan(
    table: &TruthTable<'_>,
    descs: &[&Description],
    antecedent_true: bool,
    target: f64,
    tol: f64,
) -> Result<CheckResult, SemanticsError> {
    table.model.require_captions(descs.iter().copied())?;
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for d in descs {
        let key = d.render();
        for (idx, image) in table.images.iter().enumerate() {
            if table.holds(idx, d)? != antecedent_true {
                continue;
            }
            let a = alpha_key(table.model, image, &key)?;
            let gap = if target > 0.0 { 1.0 - a } else { a + 1.0 };
            checked += 1;
            worst = worst.max(gap);
            if gap > tol && witness.is_none() {
                witness = Some(Witness { image: image.to_string(), description: (*d).clone(), alpha: a });
            }
        }
    }
    let worst_violation = if checked == 0 { 0.0 } else { worst };
    Ok(CheckResult {
        holds: worst_violation <= tol,
        vacuous: checked == 0,
        checked,
        worst_violation,
        witness,
    })
}

fn atom_descriptions(model: &ClipLikeModel) -> Vec<Description> {
    model.vocabulary().atoms().iter().map(Description::atom).collect()
}

fn compounds(all: &[Description], or: bool) -> Vec<&Description> {
    all.iter()
        .filter(|d| match d {
            Description::Or(..) => or,
            Description::And(..) => !or,
            _ => false,
        })
        .collect()
}

/// For every image `i` and atom `d` with `i |= d`: `alpha(i, d) >= 1 - tol`.
pub fn respects_basic(model: &ClipLikeModel, tol: f64) -> Result<CheckResult, SemanticsError> {
    let table = TruthTable::new(model)?;
    let atoms = atom_descriptions(model);
    scan(&table, &atoms.iter().collect::<Vec<_>>(), true, 1.0, tol)
}

/// For every image `i` and atom `d` with `i |= not d`: `alpha(i, d) <= -1 + tol`.
pub fn respects_negation(model: &ClipLikeModel, tol: f64) -> Result<CheckResult, SemanticsError> {
    let table = TruthTable::new(model)?;
    let atoms = atom_descriptions(model);
    scan(&table, &atoms.iter().collect::<Vec<_>>(), false, -1.0, tol)
}

/// The negation condition over every enumerated description up to `depth`.
pub fn respects_negation_extended(
    model: &ClipLikeModel,
    depth: usize,
    tol: f64,
) -> Result<CheckResult, SemanticsError> {
    let table = TruthTable::new(model)?;
    let all = enumerate_descriptions(model.vocabulary(), depth)?;
    scan(&table, &all.iter().collect::<Vec<_>>(), false, -1.0, tol)
}

/// For every image `i` and enumerated disjunction `c` with `i |= c`:
/// `alpha(i, c) >= 1 - tol`.
pub fn respects_disjunction(
    model: &ClipLikeModel,
    depth: usize,
    tol: f64,
) -> Result<CheckResult, SemanticsError> {
    let table = TruthTable::new(model)?;
    let all = enumerate_descriptions(model.vocabulary(), depth)?;
    scan(&table, &compounds(&all, true), true, 1.0, tol)
}

/// As [`respects_disjunction`] for conjunctions.
pub fn respects_conjunction(
    model: &ClipLikeModel,
    depth: usize,
    tol: f64,
) -> Result<CheckResult, SemanticsError> {
    let table = TruthTable::new(model)?;
    let all = enumerate_descriptions(model.vocabulary(), depth)?;
    scan(&table, &compounds(&all, false), true, 1.0, tol)
}

fn describable_from(table: &TruthTable<'_>) -> bool {
    let n_atoms = table.model.vocabulary().len();
    table.atomic.iter().all(|row| row.iter().any(|&t| t))
        && (0..n_atoms).all(|k| table.atomic.iter().any(|row| row[k]))
}

fn separable_from(table: &TruthTable<'_>) -> bool {
    let n_atoms = table.model.vocabulary().len();
    table.atomic.iter().all(|row| row.iter().any(|&t| !t))
        && (0..n_atoms).all(|k| table.atomic.iter().any(|row| !row[k]))
}

/// Every image satisfies some atom and every atom is satisfied by some image.
pub fn is_describable(model: &ClipLikeModel) -> Result<bool, SemanticsError> {
    require_images(model)?;
    Ok(describable_from(&TruthTable::new(model)?))
}

/// Every image satisfies the negation of some atom and every atom's negation
/// is satisfied by some image.
pub fn is_separable(model: &ClipLikeModel) -> Result<bool, SemanticsError> {
    require_images(model)?;
    Ok(separable_from(&TruthTable::new(model)?))
}

struct Agreement {
    pairs: usize,
    agreeing: usize,
    ties: Vec<TiePair>,
}

fn agreement_from(table: &TruthTable<'_>, all: &[Description]) -> Result<Agreement, SemanticsError> {
    let mut out = Agreement { pairs: 0, agreeing: 0, ties: Vec::new() };
    for d in all {
        for (idx, image) in table.images.iter().enumerate() {
            let sat = table.holds(idx, d)?;
            let ent = entailment_detail(table.model, image, d)?;
            out.pairs += 1;
            if sat == ent.entailed {
                out.agreeing += 1;
            }
            if ent.tie {
                out.ties.push(TiePair { image: image.to_string(), description: d.clone() });
            }
        }
    }
    Ok(out)
}

/// Fraction of (image, enumerated description) pairs on which satisfaction
/// and entailment agree.
pub fn audit_agreement(model: &ClipLikeModel, depth: usize) -> Result<f64, SemanticsError> {
    require_images(model)?;
    model.require_captions(&required_captions(model.vocabulary(), depth)?)?;
    let table = TruthTable::new(model)?;
    let all = enumerate_descriptions(model.vocabulary(), depth)?;
    let a = agreement_from(&table, &all)?;
    Ok(a.agreeing as f64 / a.pairs as f64)
}

pub fn check_complete(model: &ClipLikeModel, depth: usize, tol: f64) -> Result<CoherenceReport, SemanticsError> {
    check_complete_with(model, &AuditOptions { depth, tol, extended_negation: false })
}

/// Runs every audit. `complete` is the conjunction of the four respects-*
/// conditions.
pub fn check_complete_with(
    model: &ClipLikeModel,
    opts: &AuditOptions,
) -> Result<CoherenceReport, SemanticsError> {
    require_images(model)?;
    model.require_captions(&required_captions(model.vocabulary(), opts.depth)?)?;
    let table = TruthTable::new(model)?;
    let all = enumerate_descriptions(model.vocabulary(), opts.depth)?;
    let atoms = atom_descriptions(model);
    let atom_refs: Vec<&Description> = atoms.iter().collect();

    let respects_basic = scan(&table, &atom_refs, true, 1.0, opts.tol)?;
    let respects_negation = if opts.extended_negation {
        scan(&table, &all.iter().collect::<Vec<_>>(), false, -1.0, opts.tol)?
    } else {
        scan(&table, &atom_refs, false, -1.0, opts.tol)?
    };
    let respects_disjunction = scan(&table, &compounds(&all, true), true, 1.0, opts.tol)?;
    let respects_conjunction = scan(&table, &compounds(&all, false), true, 1.0, opts.tol)?;
    let agreement = agreement_from(&table, &all)?;

    let complete = respects_basic.holds
        && respects_negation.holds
        && respects_disjunction.holds
        && respects_conjunction.holds;
    Ok(CoherenceReport {
        metric: model.metric(),
        depth: opts.depth,
        tol: opts.tol,
        extended_negation: opts.extended_negation,
        pair_count: agreement.pairs,
        agreeing_pairs: agreement.agreeing,
        agreement_score: agreement.agreeing as f64 / agreement.pairs as f64,
        respects_basic,
        respects_negation,
        respects_disjunction,
        respects_conjunction,
        describable: describable_from(&table),
        separable: separable_from(&table),
        complete,
        ties: agreement.ties,
    })
}

pub fn check_epsilon_complete(
    model: &ClipLikeModel,
    epsilon: f64,
    depth: usize,
) -> Result<EpsilonReport, SemanticsError> {
    check_epsilon_complete_with(model, epsilon, &AuditOptions { depth, tol: epsilon, extended_negation: false })
}

/// Completeness with the `+1` conditions relaxed to `alpha >= 1 - epsilon`
/// and the `-1` condition to `alpha <= -1 + epsilon`. `opts.tol` is ignored.
pub fn check_epsilon_complete_with(
    model: &ClipLikeModel,
    epsilon: f64,
    opts: &AuditOptions,
) -> Result<EpsilonReport, SemanticsError> {
    if !(0.0..=2.0).contains(&epsilon) {
        return Err(SemanticsError::Config(format!("epsilon must lie in [0, 2], got {epsilon}")));
    }
    let report = check_complete_with(model, &AuditOptions { tol: epsilon, ..*opts })?;
    let min_epsilon = report
        .checks()
        .iter()
        .map(|(_, c)| c.worst_violation)
        .fold(0.0_f64, f64::max);
    Ok(EpsilonReport { epsilon, passes: report.complete, min_epsilon, report })
}

/// Collects the points that completeness forces onto one ray (image
/// embeddings and captions true of some image) and onto its anti-ray (atom
/// captions false of some image), and tests both for colinearity.
pub fn ray_analysis(model: &ClipLikeModel, depth: usize, tol: f64) -> Result<RayAnalysis, SemanticsError> {
    let all = enumerate_descriptions(model.vocabulary(), depth)?;
    model.require_captions(&all)?;
    let table = TruthTable::new(model)?;

    let mut true_points: Vec<LatentVector> = model.images().values().cloned().collect();
    for d in &all {
        let mut any = false;
        for idx in 0..table.images.len() {
            if table.holds(idx, d)? {
                any = true;
                break;
            }
        }
        if any {
            true_points.push(model.embedding_of(d)?.clone());
        }
    }

    let mut false_points = Vec::new();
    let mut conflicts = Vec::new();
    for (k, atom) in model.vocabulary().atoms().iter().enumerate() {
        let true_somewhere = table.atomic.iter().any(|row| row[k]);
        let false_somewhere = table.atomic.iter().any(|row| !row[k]);
        let d = Description::atom(atom);
        if false_somewhere {
            false_points.push(model.embedding_of(&d)?.clone());
            if true_somewhere {
                conflicts.push(d);
            }
        }
    }

    let min_cosine_true = min_pairwise_cosine(&true_points)?;
    let min_cosine_false = min_pairwise_cosine(&false_points)?;
    let colinear_true = min_cosine_true >= 1.0 - tol;
    let colinear_false = min_cosine_false >= 1.0 - tol;
    let true_ray = if colinear_true && !true_points.is_empty() {
        Some(ray_of(&true_points, tol)?)
    } else {
        None
    };
    let false_ray = if colinear_false && !false_points.is_empty() {
        Some(ray_of(&false_points, tol)?)
    } else {
        None
    };
    let rays_opposed = match (&true_ray, &false_ray) {
        (Some(t), Some(f)) => Some(crate::geometry::cosine(t.direction(), f.direction())? <= -1.0 + tol),
        _ => None,
    };
    Ok(RayAnalysis {
        true_count: true_points.len(),
        false_count: false_points.len(),
        colinear_true,
        colinear_false,
        min_cosine_true,
        min_cosine_false,
        true_ray,
        false_ray,
        rays_opposed,
        conflicts,
    })
}
