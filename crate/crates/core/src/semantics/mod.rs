//! CLIP-like models and their satisfaction/entailment relations.
//!
//! A model is a finite pair of embedding tables: `images` (the image map `f`)
//! and `captions` (the caption map `g`, keyed by canonical caption strings).
//! The satisfaction relation [`models`] decides atoms by a strict similarity
//! comparison against the negated caption and compounds by the boolean
//! clauses. The entailment relation [`entails`] is the softmax decision over
//! the caption pair `{d, not d}` and does consult `g` on compounds.

mod audit;
mod certificate;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::logic::{combine_neg, enumerate_descriptions, Atom, Description, LogicError, Vocabulary};

pub use audit::{
    audit_agreement, check_complete, check_complete_with, check_epsilon_complete, check_epsilon_complete_with, is_describable,
    is_separable, ray_analysis, respects_basic, respects_conjunction, respects_disjunction,
    respects_negation, respects_negation_extended, AuditOptions, CheckResult, CoherenceReport,
    EpsilonReport, RayAnalysis, TiePair, Witness, DEFAULT_DEPTH, DEFAULT_TOL,
};
pub use certificate::{
    find_violation, verify_certificate, AlphaEvaluation, Clause, Narrative, ViolationCertificate,
    CERTIFICATE_TOL_LIMIT,
};
pub use model::{ClipLikeModel, ModelFile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("no embedding for image {0:?}")]
    MissingImage(String),
    #[error("no embedding for caption(s): {}", .0.join("; "))]
    MissingCaptions(Vec<String>),
    #[error("invalid model at key {key:?}: {reason}")]
    InvalidModel { key: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Similarity between an image embedding and a caption embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Cosine,
    Dot,
    NegativeEuclidean,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cosine, Metric::Dot, Metric::NegativeEuclidean];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Dot => "dot",
            Metric::NegativeEuclidean => "negative-euclidean",
        }
    }

    pub fn similarity(self, a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
        if a.len() != b.len() {
            return Err(GeometryError::DimensionMismatch { left: a.len(), right: b.len() });
        }
        match self {
            Metric::Cosine => geometry::cosine_slices(a, b),
            Metric::Dot => Ok(geometry::dot(a, b)),
            Metric::NegativeEuclidean => {
                Ok(-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            }
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?} (expected cosine, dot or negative-euclidean)"))
    }
}

/// Captions a model must embed to be audited at `depth`: every enumerated
/// description plus the negation of each, without duplicates.
pub fn required_captions(vocab: &Vocabulary, depth: usize) -> Result<Vec<Description>, LogicError> {
    let mut out = enumerate_descriptions(vocab, depth)?;
    let deepest: Vec<Description> =
        out.iter().filter(|d| d.depth() == depth).cloned().collect();
    out.extend(deepest.into_iter().map(combine_neg));
    Ok(out)
}

/// Similarity score `alpha(i, d)` between image `i` and caption `d`.
pub fn alpha(model: &ClipLikeModel, image: &str, d: &Description) -> Result<f64, SemanticsError> {
    alpha_key(model, image, &d.render())
}

pub(crate) fn alpha_key(
    model: &ClipLikeModel,
    image: &str,
    caption: &str,
) -> Result<f64, SemanticsError> {
    let f = model.image(image)?;
    let g = model
        .caption(caption)
        .ok_or_else(|| SemanticsError::MissingCaptions(vec![caption.to_string()]))?;
    Ok(model.metric().similarity(f.as_slice(), g.as_slice())?)
}

/// Atomic satisfaction: `alpha(i, a) > alpha(i, not a)`, strictly.
pub fn models_atom(model: &ClipLikeModel, image: &str, atom: &Atom) -> Result<bool, SemanticsError> {
    let d = Description::atom(atom);
    let pos = alpha(model, image, &d)?;
    let neg = alpha(model, image, &combine_neg(d))?;
    Ok(pos > neg)
}

/// Satisfaction `i |= d`. Compounds are decided by the boolean clauses and
/// never look up the compound caption.
pub fn models(model: &ClipLikeModel, image: &str, d: &Description) -> Result<bool, SemanticsError> {
    satisfies(d, &mut |a| models_atom(model, image, a))
}

/// The recursive satisfaction clauses over an arbitrary atomic decision.
pub(crate) fn satisfies<F>(d: &Description, atomic: &mut F) -> Result<bool, SemanticsError>
where
    F: FnMut(&Atom) -> Result<bool, SemanticsError>,
{
    Ok(match d {
        Description::Atom(a) => atomic(a)?,
        Description::Neg(inner) => !satisfies(inner, atomic)?,
        Description::Or(l, r) => satisfies(l, atomic)? || satisfies(r, atomic)?,
        Description::And(l, r) => satisfies(l, atomic)? && satisfies(r, atomic)?,
    })
}

/// Both routes of the entailment decision for one (image, description) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntailmentDetail {
    pub alpha: f64,
    pub alpha_negated: f64,
    /// Softmax over `[alpha, alpha_negated]`.
    pub probability: [f64; 2],
    /// `probability[0] > probability[1]`.
    pub entailed: bool,
    /// `alpha == alpha_negated` exactly.
    pub tie: bool,
}

pub fn entailment_detail(
    model: &ClipLikeModel,
    image: &str,
    d: &Description,
) -> Result<EntailmentDetail, SemanticsError> {
    let pos = alpha(model, image, d)?;
    let neg = alpha(model, image, &combine_neg(d.clone()))?;
    let p = geometry::softmax(&[pos, neg]);
    Ok(EntailmentDetail {
        alpha: pos,
        alpha_negated: neg,
        probability: [p[0], p[1]],
        entailed: p[0] > p[1],
        tie: pos == neg,
    })
}

/// Entailment `i |- d`: the softmax over captions `{d, not d}` for image `i`
/// puts more mass on `d`.
pub fn entails(model: &ClipLikeModel, image: &str, d: &Description) -> Result<bool, SemanticsError> {
    Ok(entailment_detail(model, image, d)?.entailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{combine_or, parse};

    pub(crate) fn model_1x1(cat: [f64; 2], not_cat: [f64; 2]) -> ClipLikeModel {
        ClipLikeModel::builder(2, Metric::Cosine, &["cat"])
            .image("i", &[1.0, 0.0])
            .caption("cat", &cat)
            .caption("not ( cat )", &not_cat)
            .build()
            .unwrap()
    }

    #[test]
    fn alpha_examples() {
        let m = model_1x1([1.0, 0.0], [-1.0, 0.0]);
        let cat = parse("cat").unwrap();
        assert_eq!(alpha(&m, "i", &cat).unwrap(), 1.0);
        let m = model_1x1([0.0, 1.0], [-1.0, 0.0]);
        assert_eq!(alpha(&m, "i", &cat).unwrap(), 0.0);
        let err = alpha(&m, "i", &parse("( cat ) or ( cat )").unwrap()).unwrap_err();
        assert_eq!(err, SemanticsError::MissingCaptions(vec!["( cat ) or ( cat )".into()]));
        assert!(matches!(alpha(&m, "nope", &cat), Err(SemanticsError::MissingImage(_))));
    }

    #[test]
    fn entails_examples() {
        let m = model_1x1([1.0, 0.0], [-1.0, 0.0]);
        let cat = parse("cat").unwrap();
        let det = entailment_detail(&m, "i", &cat).unwrap();
        assert!(det.entailed && !det.tie);
        let m = model_1x1([0.0, 1.0], [0.0, -1.0]);
        let det = entailment_detail(&m, "i", &cat).unwrap();
        assert!(!det.entailed);
        assert!(det.tie);
        assert!(!models(&m, "i", &cat).unwrap());
        assert!(models(&m, "i", &combine_neg(cat)).unwrap());
    }

    #[test]
    fn models_examples() {
        let m = model_1x1([1.0, 0.0], [-1.0, 0.0]);
        let cat = parse("cat").unwrap();
        assert!(models(&m, "i", &cat).unwrap());
        assert!(models(&m, "i", &combine_neg(combine_neg(cat.clone()))).unwrap());
        // compounds never consult g on the compound itself
        assert!(models(&m, "i", &combine_or(cat.clone(), cat)).unwrap());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("euclid".parse::<Metric>().is_err());
    }

    #[test]
    fn metric_similarities() {
        let a = [3.0, 0.0];
        let b = [0.0, 4.0];
        assert_eq!(Metric::Cosine.similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(Metric::Dot.similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(Metric::NegativeEuclidean.similarity(&a, &b).unwrap(), -5.0);
    }

    #[test]
    fn required_captions_cover_negations() {
        let v = Vocabulary::from_strs(&["cat"]).unwrap();
        let caps: Vec<String> = required_captions(&v, 0).unwrap().iter().map(|d| d.render()).collect();
        assert_eq!(caps, ["cat", "not ( cat )"]);
        let caps = required_captions(&v, 1).unwrap();
        assert_eq!(caps.len(), 4 + 3);
        assert!(caps.contains(&parse("not ( not ( cat ) )").unwrap()));
    }
}
