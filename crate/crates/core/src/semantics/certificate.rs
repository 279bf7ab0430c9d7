//! Concrete incompleteness witnesses for describable, separable models.
//!
//! The construction fixes the first atom `d`, the first image `i` with
//! `i |= d`, and the first image `j` and atom `e` with `j |= not d` and
//! `j |= e`. Completeness would then force
//!
//! ```text
//! alpha(i, d) = 1,  alpha(i, d or e) = 1,  alpha(j, e) = 1,
//! alpha(j, d or e) = 1,  alpha(j, d) = -1
//! ```
//!
//! The first four put `f(i)`, `g(d)`, `g(d or e)` and `f(j)` on one ray, which
//! makes the last impossible. Under cosine similarity at least one of the
//! five equalities fails whenever each is only required to hold within `tol`
//! and `tol < 1 - 1/sqrt(2)`: four angles of at most `acos(1 - tol)` each
//! cannot span the half-turn between `f(j)` and `-g(d)`.

use serde::{Deserialize, Serialize};

use super::audit::is_describable;
use super::{alpha, is_separable, models, ClipLikeModel, Metric, SemanticsError};
use crate::logic::{combine_and, combine_neg, combine_or, Atom, Description};

/// Largest tolerance for which the five-step chain is guaranteed to break.
pub const CERTIFICATE_TOL_LIMIT: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Max drift between a recorded and a re-evaluated similarity on replay.
const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clause {
    Basic,
    Negation,
    Disjunction,
    Conjunction,
}

impl std::fmt::Display for Clause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Clause::Basic => "basic",
            Clause::Negation => "negation",
            Clause::Disjunction => "disjunction",
            Clause::Conjunction => "conjunction",
        })
    }
}

/// One link of the equality chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEvaluation {
    pub clause: Clause,
    pub image: String,
    pub description: Description,
    /// Value completeness demands: `1` or `-1`.
    pub required: f64,
    pub alpha: f64,
    /// `|alpha - required|`.
    pub gap: f64,
    pub satisfied: bool,
}

/// The `(i, d, j, e)` tuple of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub i: String,
    pub d: Atom,
    pub j: String,
    pub e: Atom,
    /// `j |= (not d) and e`.
    pub j_models: Description,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationCertificate {
    pub kind: Clause,
    pub tol: f64,
    pub witness_images: Vec<String>,
    pub witness_descriptions: Vec<Description>,
    /// Index into `chain` of the first failing equality.
    pub failing_step: usize,
    /// Similarity values cited by the certificate; for the failing step
    /// these are the offending values.
    pub alpha_values: Vec<f64>,
    pub chain: Vec<AlphaEvaluation>,
    pub narrative: Narrative,
}

fn evaluate(
    model: &ClipLikeModel,
    clause: Clause,
    image: &str,
    description: Description,
    required: f64,
    tol: f64,
) -> Result<AlphaEvaluation, SemanticsError> {
    let a = alpha(model, image, &description)?;
    let gap = (a - required).abs();
    Ok(AlphaEvaluation {
        clause,
        image: image.to_string(),
        description,
        required,
        alpha: a,
        gap,
        satisfied: gap <= tol,
    })
}

fn chain_for(
    model: &ClipLikeModel,
    n: &Narrative,
    tol: f64,
) -> Result<Vec<AlphaEvaluation>, SemanticsError> {
    let d = Description::atom(&n.d);
    let e = Description::atom(&n.e);
    let d_or_e = combine_or(d.clone(), e.clone());
    Ok(vec![
        evaluate(model, Clause::Basic, &n.i, d.clone(), 1.0, tol)?,
        evaluate(model, Clause::Disjunction, &n.i, d_or_e.clone(), 1.0, tol)?,
        evaluate(model, Clause::Basic, &n.j, e, 1.0, tol)?,
        evaluate(model, Clause::Disjunction, &n.j, d_or_e, 1.0, tol)?,
        evaluate(model, Clause::Negation, &n.j, d, -1.0, tol)?,
    ])
}

fn narrative(model: &ClipLikeModel) -> Result<Narrative, SemanticsError> {
    let atoms = model.vocabulary().atoms();
    let d_atom = &atoms[0];
    let d = Description::atom(d_atom);
    let not_d = combine_neg(d.clone());
    let mut i = None;
    for image in model.image_ids() {
        if models(model, image, &d)? {
            i = Some(image.to_string());
            break;
        }
    }
    let i = i.ok_or_else(|| {
        SemanticsError::InternalInconsistency(format!("no image satisfies {d_atom} in a describable model"))
    })?;
    for image in model.image_ids() {
        if !models(model, image, &not_d)? {
            continue;
        }
        for e in atoms {
            let target = combine_and(not_d.clone(), Description::atom(e));
            if models(model, image, &target)? {
                return Ok(Narrative { i, d: d_atom.clone(), j: image.to_string(), e: e.clone(), j_models: target });
            }
        }
    }
    Err(SemanticsError::InternalInconsistency(format!(
        "no image satisfies (not {d_atom}) and e in a describable, separable model"
    )))
}

/// Builds the incompleteness witness for a describable, separable model under
/// cosine similarity.
pub fn find_violation(
    model: &ClipLikeModel,
    tol: f64,
) -> Result<ViolationCertificate, SemanticsError> {
    if model.metric() != Metric::Cosine {
        return Err(SemanticsError::PreconditionViolated(format!(
            "the ray argument needs cosine similarity, model uses {}",
            model.metric()
        )));
    }
    if !(0.0..CERTIFICATE_TOL_LIMIT).contains(&tol) {
        return Err(SemanticsError::PreconditionViolated(format!(
            "tolerance must lie in [0, {CERTIFICATE_TOL_LIMIT:.6}), got {tol}"
        )));
    }
    if !is_describable(model)? {
        return Err(SemanticsError::PreconditionViolated("describability required".into()));
    }
    if !is_separable(model)? {
        return Err(SemanticsError::PreconditionViolated("separability required".into()));
    }
    let n = narrative(model)?;
    let chain = chain_for(model, &n, tol)?;
    let failing_step = chain.iter().position(|s| !s.satisfied).ok_or_else(|| {
        SemanticsError::InternalInconsistency(
            "every equality of the chain holds; the certificate construction is broken".into(),
        )
    })?;
    let step = &chain[failing_step];
    Ok(ViolationCertificate {
        kind: step.clause,
        tol,
        witness_images: vec![step.image.clone()],
        witness_descriptions: vec![step.description.clone()],
        alpha_values: vec![step.alpha],
        failing_step,
        chain,
        narrative: n,
    })
}

/// Re-evaluates a certificate against a model. Returns a description of the
/// first discrepancy, if any.
pub fn verify_certificate(model: &ClipLikeModel, cert: &ViolationCertificate) -> Result<(), String> {
    let n = &cert.narrative;
    let d = Description::atom(&n.d);
    let check = |image: &str, desc: &Description| -> Result<bool, String> {
        models(model, image, desc).map_err(|e| e.to_string())
    };
    if !check(&n.i, &d)? {
        return Err(format!("{} does not satisfy {}", n.i, d));
    }
    if !check(&n.j, &n.j_models)? {
        return Err(format!("{} does not satisfy {}", n.j, n.j_models));
    }
    let expected_target = combine_and(combine_neg(d), Description::atom(&n.e));
    if n.j_models != expected_target {
        return Err(format!("narrative target {} should be {}", n.j_models, expected_target));
    }
    let fresh = chain_for(model, n, cert.tol).map_err(|e| e.to_string())?;
    if fresh.len() != cert.chain.len() {
        return Err("chain length differs".into());
    }
    for (k, (old, new)) in cert.chain.iter().zip(&fresh).enumerate() {
        if old.image != new.image || old.description != new.description || old.clause != new.clause {
            return Err(format!("step {k} cites a different pair"));
        }
        if (old.alpha - new.alpha).abs() > REPLAY_TOL {
            return Err(format!("step {k}: recorded alpha {} but model gives {}", old.alpha, new.alpha));
        }
        if old.satisfied != new.satisfied {
            return Err(format!("step {k}: satisfaction flag differs on replay"));
        }
    }
    let first_fail = fresh.iter().position(|s| !s.satisfied);
    if first_fail != Some(cert.failing_step) {
        return Err(format!("first failing step is {first_fail:?}, certificate says {}", cert.failing_step));
    }
    let step = &fresh[cert.failing_step];
    if cert.kind != step.clause
        || cert.alpha_values.len() != 1
        || (cert.alpha_values[0] - step.alpha).abs() > REPLAY_TOL
    {
        return Err("certificate summary does not match the failing step".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    fn separable_2x2(or_caption: [f64; 2]) -> ClipLikeModel {
        ClipLikeModel::builder(2, Metric::Cosine, &["a1", "a2"])
            .image("i1", &[1.0, 0.0])
            .image("i2", &[0.0, 1.0])
            .caption("a1", &[1.0, 0.0])
            .caption("a2", &[0.0, 1.0])
            .caption("not ( a1 )", &[-1.0, 0.0])
            .caption("not ( a2 )", &[0.0, -1.0])
            .caption("( a1 ) or ( a2 )", &or_caption)
            .build()
            .unwrap()
    }

    #[test]
    fn certificate_on_separable_2x2() {
        let m = separable_2x2([1.0, 1.0]);
        let cert = find_violation(&m, 1e-6).unwrap();
        assert_eq!(cert.narrative.i, "i1");
        assert_eq!(cert.narrative.j, "i2");
        assert_eq!(cert.narrative.e.as_str(), "a2");
        assert_eq!(cert.failing_step, 1);
        assert_eq!(cert.kind, Clause::Disjunction);
        assert_eq!(cert.witness_descriptions, vec![parse("( a1 ) or ( a2 )").unwrap()]);
        assert!((cert.alpha_values[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(verify_certificate(&m, &cert).is_ok());
    }

    #[test]
    fn or_caption_on_i1_ray_breaks_later_step() {
        let m = separable_2x2([2.0, 0.0]);
        let cert = find_violation(&m, 1e-6).unwrap();
        // alpha(i2, a1 or a2) = 0
        assert_eq!(cert.failing_step, 3);
        assert_eq!(cert.kind, Clause::Disjunction);
    }

    #[test]
    fn replay_detects_tampering() {
        let m = separable_2x2([1.0, 1.0]);
        let mut cert = find_violation(&m, 1e-6).unwrap();
        cert.chain[0].alpha = 0.5;
        assert!(verify_certificate(&m, &cert).is_err());
        let other = separable_2x2([2.0, 0.0]);
        let cert = find_violation(&m, 1e-6).unwrap();
        assert!(verify_certificate(&other, &cert).is_err());
    }

    #[test]
    fn preconditions() {
        let m = ClipLikeModel::builder(2, Metric::Cosine, &["cat"])
            .image("i", &[1.0, 0.0])
            .caption("cat", &[1.0, 0.0])
            .caption("not ( cat )", &[-1.0, 0.0])
            .build()
            .unwrap();
        assert_eq!(
            find_violation(&m, 1e-6),
            Err(SemanticsError::PreconditionViolated("separability required".into()))
        );
        let sep = separable_2x2([1.0, 1.0]);
        assert!(matches!(find_violation(&sep, 0.3), Err(SemanticsError::PreconditionViolated(_))));
        assert!(matches!(
            find_violation(&sep.with_metric(Metric::Dot), 1e-6),
            Err(SemanticsError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn missing_disjunction_caption() {
        let m = ClipLikeModel::builder(2, Metric::Cosine, &["a1", "a2"])
            .image("i1", &[1.0, 0.0])
            .image("i2", &[0.0, 1.0])
            .caption("a1", &[1.0, 0.0])
            .caption("a2", &[0.0, 1.0])
            .caption("not ( a1 )", &[-1.0, 0.0])
            .caption("not ( a2 )", &[0.0, -1.0])
            .build()
            .unwrap();
        assert_eq!(
            find_violation(&m, 1e-6),
            Err(SemanticsError::MissingCaptions(vec!["( a1 ) or ( a2 )".into()]))
        );
    }
}
