use serde::Serialize;

use super::{Margins, SearchError, TruthSpec};
use crate::geometry::{cosine_grad_into, dot, norm, ZERO_NORM};
use crate::logic::{enumerate_descriptions, truth_eval, Description, LogicError};
use crate::semantics::{Clause, ClipLikeModel, Metric, SemanticsError};

/// One completeness equality the embeddings should satisfy:
/// `sim(f(image), g(description)) = target`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub image: String,
    pub description: Description,
    /// `1.0` or `-1.0`.
    pub target: f64,
    pub origin: Clause,
}

/// Constraints implied by the spec's intended truth pattern.
///
/// Atoms first (true: `+1` basic, false: `-1` negation), then every
/// enumerated disjunction and conjunction of depth at most `depth` that is
/// true of an image (`+1`). Descriptions are visited in enumeration order,
/// images in spec order within each description.
pub fn build_constraints(spec: &TruthSpec, depth: usize) -> Result<Vec<Constraint>, LogicError> {
    let mut out = Vec::new();
    for (a, atom) in spec.atoms().atoms().iter().enumerate() {
        let d = Description::atom(atom);
        for (i, image) in spec.images().iter().enumerate() {
            let (target, origin) =
                if spec.truth(i, a) { (1.0, Clause::Basic) } else { (-1.0, Clause::Negation) };
            out.push(Constraint { image: image.clone(), description: d.clone(), target, origin });
        }
    }
    for d in enumerate_descriptions(spec.atoms(), depth)? {
        let origin = match d {
            Description::Or(..) => Clause::Disjunction,
            Description::And(..) => Clause::Conjunction,
            _ => continue,
        };
        for (i, image) in spec.images().iter().enumerate() {
            if truth_eval(&d, &spec.assignment(i)) {
                out.push(Constraint { image: image.clone(), description: d.clone(), target: 1.0, origin });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Term {
    image: usize,
    caption: usize,
    target: f64,
}

/// Constraints compiled against a flat parameter vector: all image
/// embeddings, then all caption embeddings, `dim` components each.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub dim: usize,
    pub metric: Metric,
    pub margins: Margins,
    pub n_images: usize,
    pub n_captions: usize,
    terms: Vec<Term>,
}

impl Objective {
    pub fn compile(
        image_ids: &[&str],
        caption_keys: &[&str],
        dim: usize,
        metric: Metric,
        margins: Margins,
        constraints: &[Constraint],
    ) -> Result<Self, SemanticsError> {
        let mut terms = Vec::with_capacity(constraints.len());
        let mut missing = Vec::new();
        for c in constraints {
            let image = image_ids
                .iter()
                .position(|i| *i == c.image)
                .ok_or_else(|| SemanticsError::MissingImage(c.image.clone()))?;
            let key = c.description.render();
            match caption_keys.iter().position(|k| *k == key) {
                Some(caption) => terms.push(Term { image, caption, target: c.target }),
                None => {
                    if !missing.contains(&key) {
                        missing.push(key)
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(SemanticsError::MissingCaptions(missing));
        }
        Ok(Objective { dim, metric, margins, n_images: image_ids.len(), n_captions: caption_keys.len(), terms })
    }

    pub fn len(&self) -> usize {
        (self.n_images + self.n_captions) * self.dim
    }

    fn image<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        &x[k * self.dim..(k + 1) * self.dim]
    }

    fn caption<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        let at = (self.n_images + k) * self.dim;
        &x[at..at + self.dim]
    }

    /// Penalty residual `r` (loss term is `r^2`) and `d(r^2)/d(sim)`.
    fn residual(&self, sim: f64, target: f64) -> (f64, f64) {
        match self.metric {
            Metric::Cosine | Metric::Dot => {
                let r = sim - target;
                (r, 2.0 * r)
            }
            Metric::NegativeEuclidean => {
                if target > 0.0 {
                    let r = (self.margins.true_pair - sim).max(0.0);
                    (r, -2.0 * r)
                } else {
                    let r = (sim - self.margins.false_pair).max(0.0);
                    (r, 2.0 * r)
                }
            }
        }
    }

    fn similarity(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        match self.metric {
            Metric::Cosine => {
                let (na, nb) = (norm(a), norm(b));
                if na < ZERO_NORM || nb < ZERO_NORM {
                    return None;
                }
                Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
            }
            Metric::Dot => Some(dot(a, b)),
            Metric::NegativeEuclidean => {
                Some(-a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
            }
        }
    }

    /// Loss at `x`; infinite where a cosine is undefined.
    pub fn loss(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            match self.similarity(self.image(x, t.image), self.caption(x, t.caption)) {
                Some(sim) => {
                    let (r, _) = self.residual(sim, t.target);
                    total += r * r;
                }
                None => return f64::INFINITY,
            }
        }
        total
    }

    /// Writes the gradient into `grad` and returns the loss.
    pub fn loss_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let dim = self.dim;
        let mut total = 0.0;
        let mut buf = vec![0.0; dim];
        for t in &self.terms {
            let (ia, ca) = (t.image * dim, (self.n_images + t.caption) * dim);
            let f = &x[ia..ia + dim];
            let g = &x[ca..ca + dim];
            let Some(sim) = self.similarity(f, g) else {
                return f64::INFINITY;
            };
            let (r, dloss) = self.residual(sim, t.target);
            total += r * r;
            if dloss == 0.0 {
                continue;
            }
            match self.metric {
                Metric::Cosine => {
                    cosine_grad_into(f, g, &mut buf).expect("norms checked above");
                    for k in 0..dim {
                        grad[ia + k] += dloss * buf[k];
                    }
                    cosine_grad_into(g, f, &mut buf).expect("norms checked above");
                    for k in 0..dim {
                        grad[ca + k] += dloss * buf[k];
                    }
                }
                Metric::Dot => {
                    for k in 0..dim {
                        grad[ia + k] += dloss * g[k];
                        grad[ca + k] += dloss * f[k];
                    }
                }
                Metric::NegativeEuclidean => {
                    // sim = -|f - g|; undefined gradient at f = g, taken as 0
                    let dist = -sim;
                    if dist > 0.0 {
                        for k in 0..dim {
                            let d = (f[k] - g[k]) / dist;
                            grad[ia + k] -= dloss * d;
                            grad[ca + k] += dloss * d;
                        }
                    }
                }
            }
        }
        total
    }
}

fn model_params(model: &ClipLikeModel) -> Vec<f64> {
    model
        .images()
        .values()
        .chain(model.captions().values())
        .flat_map(|v| v.as_slice().iter().copied())
        .collect()
}

fn compile_for(model: &ClipLikeModel, constraints: &[Constraint], margins: Margins) -> Result<Objective, SemanticsError> {
    let images: Vec<&str> = model.image_ids().collect();
    let captions: Vec<&str> = model.captions().keys().map(String::as_str).collect();
    Objective::compile(&images, &captions, model.dim(), model.metric(), margins, constraints)
}

/// Penalty objective: `sum (sim - target)^2` for cosine and dot; for
/// negative-euclidean, `sum max(0, margins.true_pair - sim)^2` over `+1`
/// constraints plus `sum max(0, sim - margins.false_pair)^2` over `-1`
/// constraints.
pub fn loss(model: &ClipLikeModel, constraints: &[Constraint], margins: Margins) -> Result<f64, SearchError> {
    let obj = compile_for(model, constraints, margins)?;
    Ok(obj.loss(&model_params(model)))
}

/// Gradient of [`loss`] with respect to every embedding component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub images: indexmap::IndexMap<String, Vec<f64>>,
    pub captions: indexmap::IndexMap<String, Vec<f64>>,
}

impl ModelGradient {
    pub fn norm(&self) -> f64 {
        self.images
            .values()
            .chain(self.captions.values())
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn loss_grad(
    model: &ClipLikeModel,
    constraints: &[Constraint],
    margins: Margins,
) -> Result<ModelGradient, SearchError> {
    let obj = compile_for(model, constraints, margins)?;
    let x = model_params(model);
    let mut g = vec![0.0; x.len()];
    obj.loss_grad(&x, &mut g);
    let dim = model.dim();
    let images = model
        .image_ids()
        .enumerate()
        .map(|(k, id)| (id.to_string(), g[k * dim..(k + 1) * dim].to_vec()))
        .collect();
    let n = model.images().len();
    let captions = model
        .captions()
        .keys()
        .enumerate()
        .map(|(k, key)| (key.clone(), g[(n + k) * dim..(n + k + 1) * dim].to_vec()))
        .collect();
    Ok(ModelGradient { images, captions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cosine_grad, LatentVector};
    use crate::logic::parse;

    fn one_by_one(truth: bool) -> TruthSpec {
        TruthSpec::from_fn(&["i"], &["cat"], |_, _| truth).unwrap()
    }

    #[test]
    fn constraint_examples() {
        let c = build_constraints(&one_by_one(true), 1).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].target, c[0].origin), (1.0, Clause::Basic));
        assert_eq!(c[1].description, parse("( cat ) or ( cat )").unwrap());
        assert_eq!(c[1].origin, Clause::Disjunction);
        assert_eq!(c[2].origin, Clause::Conjunction);

        let c = build_constraints(&one_by_one(false), 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].target, c[0].origin), (-1.0, Clause::Negation));

        let spec = TruthSpec::from_fn(&["i1", "i2"], &["cat"], |i, _| i == 0).unwrap();
        let c = build_constraints(&spec, 0).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].image.as_str(), c[0].target), ("i1", 1.0));
        assert_eq!((c[1].image.as_str(), c[1].target), ("i2", -1.0));
    }

    fn model(cat: [f64; 2]) -> ClipLikeModel {
        ClipLikeModel::builder(2, Metric::Cosine, &["cat"])
            .image("i", &[1.0, 0.0])
            .caption("cat", &cat)
            .caption("not ( cat )", &[-1.0, 0.0])
            .build()
            .unwrap()
    }

    #[test]
    fn loss_examples() {
        let basic = build_constraints(&one_by_one(true), 0).unwrap();
        assert_eq!(loss(&model([3.0, 0.0]), &basic, Margins::default()).unwrap(), 0.0);
        assert_eq!(loss(&model([0.0, 1.0]), &basic, Margins::default()).unwrap(), 1.0);

        let mut both = basic.clone();
        both.push(Constraint { target: -1.0, origin: Clause::Negation, ..basic[0].clone() });
        for angle in [0.0f64, 0.3, 1.0, 1.5, 2.5, 3.1] {
            let l = loss(&model([angle.cos(), angle.sin()]), &both, Margins::default()).unwrap();
            assert!(l >= 2.0 - 1e-12, "{l}");
        }
    }

    #[test]
    fn gradient_at_optimum_vanishes() {
        let basic = build_constraints(&one_by_one(true), 0).unwrap();
        let g = loss_grad(&model([2.0, 0.0]), &basic, Margins::default()).unwrap();
        assert!(g.norm() < 1e-8);
    }

    #[test]
    fn gradient_by_hand_single_constraint() {
        // loss = (cos - 1)^2 with cos = 0: d/df = 2 (0 - 1) cosine_grad(f, g)
        let basic = build_constraints(&one_by_one(true), 0).unwrap();
        let g = loss_grad(&model([0.0, 1.0]), &basic, Margins::default()).unwrap();
        let f = LatentVector::new(vec![1.0, 0.0]).unwrap();
        let c = LatentVector::new(vec![0.0, 1.0]).unwrap();
        let want_f: Vec<f64> = cosine_grad(&f, &c).unwrap().as_slice().iter().map(|x| -2.0 * x).collect();
        let want_c: Vec<f64> = cosine_grad(&c, &f).unwrap().as_slice().iter().map(|x| -2.0 * x).collect();
        assert_eq!(g.images["i"], want_f);
        assert_eq!(g.images["i"], vec![0.0, -2.0]);
        assert_eq!(g.captions["cat"], want_c);
        assert_eq!(g.captions["not ( cat )"], vec![0.0, 0.0]);
    }

    #[test]
    fn missing_caption_is_reported() {
        let c = build_constraints(&one_by_one(true), 1).unwrap();
        match loss(&model([1.0, 0.0]), &c, Margins::default()) {
            Err(SearchError::Semantics(SemanticsError::MissingCaptions(keys))) => {
                assert_eq!(keys, ["( cat ) or ( cat )", "( cat ) and ( cat )"])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hinge_is_zero_inside_margins() {
        let spec = TruthSpec::from_fn(&["i"], &["cat", "dog"], |_, a| a == 0).unwrap();
        let c = build_constraints(&spec, 0).unwrap();
        let m = ClipLikeModel::builder(2, Metric::NegativeEuclidean, &["cat", "dog"])
            .image("i", &[0.0, 1.0])
            .caption("cat", &[0.0, 1.5])
            .caption("dog", &[0.0, -2.0])
            .caption("not ( cat )", &[1.0, 0.0])
            .caption("not ( dog )", &[1.0, 0.0])
            .build()
            .unwrap();
        let margins = Margins { true_pair: -1.0, false_pair: -2.0 };
        assert_eq!(loss(&m, &c, margins).unwrap(), 0.0);
        // dog at distance 1 from i: (−1 − (−2))^2 = 1
        let m2 = m.map_embeddings(|k, v| if k == "captions.dog" { LatentVector::new(vec![0.0, 2.0]).unwrap() } else { v.clone() }).unwrap();
        assert_eq!(loss(&m2, &c, margins).unwrap(), 1.0);
    }
}
