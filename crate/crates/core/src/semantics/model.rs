use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Metric, SemanticsError};
use crate::geometry::{LatentVector, ZERO_NORM};
use crate::logic::{combine_neg, parse, Description, Vocabulary};

/// A CLIP-like model: image and caption embedding tables over a shared
/// latent space, plus the similarity metric.
///
/// Image and caption order follow insertion (file) order; audits use it to
/// pick witnesses deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipLikeModel {
    dim: usize,
    metric: Metric,
    vocabulary: Vocabulary,
    images: IndexMap<String, LatentVector>,
    captions: IndexMap<String, LatentVector>,
}

/// On-disk form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    #[serde(default)]
    pub metric: Metric,
    pub atoms: Vec<String>,
    pub images: IndexMap<String, Vec<f64>>,
    pub captions: IndexMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> SemanticsError {
    SemanticsError::InvalidModel { key: key.into(), reason: reason.into() }
}

fn check_vector(key: &str, dim: usize, components: Vec<f64>) -> Result<LatentVector, SemanticsError> {
    if components.len() != dim {
        return Err(invalid(key, format!("expected {dim} components, found {}", components.len())));
    }
    let v = LatentVector::new(components).map_err(|e| invalid(key, e.to_string()))?;
    if v.norm() < ZERO_NORM {
        return Err(invalid(key, "zero vector"));
    }
    Ok(v)
}

impl ClipLikeModel {
    /// Validates and assembles a model. Every caption key must be the
    /// canonical rendering of a description over `vocabulary`, and every atom
    /// and negated atom must be embedded.
    pub fn new(
        dim: usize,
        metric: Metric,
        vocabulary: Vocabulary,
        images: IndexMap<String, LatentVector>,
        captions: IndexMap<String, LatentVector>,
    ) -> Result<Self, SemanticsError> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        for (key, v) in images.iter().map(|(k, v)| (format!("images.{k}"), v)).chain(
            captions.iter().map(|(k, v)| (format!("captions.{k}"), v)),
        ) {
            if v.dim() != dim {
                return Err(invalid(key, format!("expected {dim} components, found {}", v.dim())));
            }
            if v.norm() < ZERO_NORM {
                return Err(invalid(key, "zero vector"));
            }
        }
        for key in captions.keys() {
            let d = parse(key).map_err(|e| invalid(format!("captions.{key}"), e.to_string()))?;
            if d.render() != *key {
                return Err(invalid(
                    format!("captions.{key}"),
                    format!("not in canonical form (expected {:?})", d.render()),
                ));
            }
            if let Some(a) = d.atoms().into_iter().find(|a| !vocabulary.contains(a)) {
                return Err(invalid(format!("captions.{key}"), format!("atom {:?} is not in the vocabulary", a.as_str())));
            }
        }
        for atom in vocabulary.atoms() {
            let d = Description::atom(atom);
            for needed in [d.clone(), combine_neg(d)] {
                let key = needed.render();
                if !captions.contains_key(&key) {
                    return Err(invalid(format!("captions.{key}"), "required caption is missing"));
                }
            }
        }
        Ok(ClipLikeModel { dim, metric, vocabulary, images, captions })
    }

    pub fn from_file(file: ModelFile) -> Result<Self, SemanticsError> {
        let vocabulary = Vocabulary::from_strs(&file.atoms).map_err(|e| invalid("atoms", e.to_string()))?;
        if file.dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        let mut images = IndexMap::with_capacity(file.images.len());
        for (id, v) in file.images {
            let v = check_vector(&format!("images.{id}"), file.dim, v)?;
            images.insert(id, v);
        }
        let mut captions = IndexMap::with_capacity(file.captions.len());
        for (key, v) in file.captions {
            let v = check_vector(&format!("captions.{key}"), file.dim, v)?;
            captions.insert(key, v);
        }
        ClipLikeModel::new(file.dim, file.metric, vocabulary, images, captions)
    }

    /// Parses and validates a JSON model.
    pub fn from_json(text: &str) -> Result<Self, SemanticsError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| SemanticsError::Malformed(e.to_string()))?;
        ClipLikeModel::from_file(file)
    }

    pub fn to_file(&self, manifest: Option<serde_json::Value>) -> ModelFile {
        ModelFile {
            dim: self.dim,
            metric: self.metric,
            atoms: self.vocabulary.atoms().iter().map(|a| a.to_string()).collect(),
            images: self.images.iter().map(|(k, v)| (k.clone(), v.as_slice().to_vec())).collect(),
            captions: self.captions.iter().map(|(k, v)| (k.clone(), v.as_slice().to_vec())).collect(),
            manifest,
        }
    }

    pub fn builder(dim: usize, metric: Metric, atoms: &[&str]) -> ModelBuilder {
        ModelBuilder {
            file: ModelFile {
                dim,
                metric,
                atoms: atoms.iter().map(|s| s.to_string()).collect(),
                images: IndexMap::new(),
                captions: IndexMap::new(),
                manifest: None,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn images(&self) -> &IndexMap<String, LatentVector> {
        &self.images
    }

    pub fn captions(&self) -> &IndexMap<String, LatentVector> {
        &self.captions
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn image(&self, id: &str) -> Result<&LatentVector, SemanticsError> {
        self.images.get(id).ok_or_else(|| SemanticsError::MissingImage(id.to_string()))
    }

    pub fn caption(&self, key: &str) -> Option<&LatentVector> {
        self.captions.get(key)
    }

    pub fn embedding_of(&self, d: &Description) -> Result<&LatentVector, SemanticsError> {
        let key = d.render();
        self.captions.get(&key).ok_or(SemanticsError::MissingCaptions(vec![key]))
    }

    /// Captions among `needed` that have no embedding, in the given order.
    pub fn missing_captions<'a, I>(&self, needed: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a Description>,
    {
        needed
            .into_iter()
            .map(Description::render)
            .filter(|k| !self.captions.contains_key(k))
            .collect()
    }

    pub fn require_captions<'a, I>(&self, needed: I) -> Result<(), SemanticsError>
    where
        I: IntoIterator<Item = &'a Description>,
    {
        let missing = self.missing_captions(needed);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(SemanticsError::MissingCaptions(missing))
        }
    }

    /// Same model with a different metric.
    pub fn with_metric(&self, metric: Metric) -> ClipLikeModel {
        ClipLikeModel { metric, ..self.clone() }
    }

    /// Same model with every embedding transformed by `f(key, vector)`.
    /// Keys are prefixed `images.` or `captions.`.
    pub fn map_embeddings<F>(&self, mut f: F) -> Result<ClipLikeModel, SemanticsError>
    where
        F: FnMut(&str, &LatentVector) -> LatentVector,
    {
        let images = self
            .images
            .iter()
            .map(|(k, v)| (k.clone(), f(&format!("images.{k}"), v)))
            .collect();
        let captions = self
            .captions
            .iter()
            .map(|(k, v)| (k.clone(), f(&format!("captions.{k}"), v)))
            .collect();
        ClipLikeModel::new(self.dim, self.metric, self.vocabulary.clone(), images, captions)
    }
}

/// Incremental construction of small models, mostly for tests and examples.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    file: ModelFile,
}

impl ModelBuilder {
    pub fn image(mut self, id: &str, v: &[f64]) -> Self {
        self.file.images.insert(id.to_string(), v.to_vec());
        self
    }

    pub fn caption(mut self, key: &str, v: &[f64]) -> Self {
        self.file.captions.insert(key.to_string(), v.to_vec());
        self
    }

    pub fn description(self, d: &Description, v: &[f64]) -> Self {
        let key = d.render();
        self.caption(&key, v)
    }

    pub fn build(self) -> Result<ClipLikeModel, SemanticsError> {
        ClipLikeModel::from_file(self.file)
    }
}
