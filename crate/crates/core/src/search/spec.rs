use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::logic::{Atom, Vocabulary};

/// Intended atomic truth pattern over images x atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    images: Vec<String>,
    atoms: Vocabulary,
    // truth[image][atom]
    truth: Vec<Vec<bool>>,
}

/// On-disk form: `truth` is keyed by `"image|atom"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpecFile {
    pub images: Vec<String>,
    pub atoms: Vec<String>,
    pub truth: IndexMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> SearchError {
    SearchError::InvalidSpec { key: key.into(), reason: reason.into() }
}

fn check_image_ids(images: &[String]) -> Result<(), SearchError> {
    if images.is_empty() {
        return Err(invalid("images", "at least one image is required"));
    }
    for (k, id) in images.iter().enumerate() {
        if id.is_empty() || id.contains('|') {
            return Err(invalid(format!("images.{id}"), "image ids must be nonempty and free of '|'"));
        }
        if images[..k].contains(id) {
            return Err(invalid(format!("images.{id}"), "duplicate image id"));
        }
    }
    Ok(())
}

impl TruthSpec {
    pub fn new(images: Vec<String>, atoms: Vocabulary, truth: Vec<Vec<bool>>) -> Result<Self, SearchError> {
        check_image_ids(&images)?;
        if truth.len() != images.len() || truth.iter().any(|row| row.len() != atoms.len()) {
            return Err(invalid("truth", "table must cover every image x atom pair"));
        }
        Ok(TruthSpec { images, atoms, truth })
    }

    /// Builds a spec from a predicate on (image index, atom index).
    pub fn from_fn<F>(images: &[&str], atoms: &[&str], f: F) -> Result<Self, SearchError>
    where
        F: Fn(usize, usize) -> bool,
    {
        let vocab = Vocabulary::from_strs(atoms)?;
        let truth = (0..images.len()).map(|i| (0..atoms.len()).map(|a| f(i, a)).collect()).collect();
        TruthSpec::new(images.iter().map(|s| s.to_string()).collect(), vocab, truth)
    }

    pub fn from_file(file: TruthSpecFile) -> Result<Self, SearchError> {
        let atoms = Vocabulary::from_strs(&file.atoms).map_err(|e| invalid("atoms", e.to_string()))?;
        check_image_ids(&file.images)?;
        let mut truth: Vec<Vec<Option<bool>>> = vec![vec![None; atoms.len()]; file.images.len()];
        for (key, value) in &file.truth {
            let (image, atom) = key
                .split_once('|')
                .ok_or_else(|| invalid(format!("truth.{key}"), "expected \"image|atom\""))?;
            let i = file
                .images
                .iter()
                .position(|x| x == image)
                .ok_or_else(|| invalid(format!("truth.{key}"), format!("unknown image {image:?}")))?;
            let a = Atom::new(atom)
                .ok()
                .and_then(|a| atoms.position(&a))
                .ok_or_else(|| invalid(format!("truth.{key}"), format!("unknown atom {atom:?}")))?;
            truth[i][a] = Some(*value);
        }
        let mut table = Vec::with_capacity(truth.len());
        for (i, row) in truth.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (a, cell) in row.into_iter().enumerate() {
                let key = format!("truth.{}|{}", file.images[i], atoms.atoms()[a]);
                out.push(cell.ok_or_else(|| invalid(key, "missing truth value"))?);
            }
            table.push(out);
        }
        TruthSpec::new(file.images, atoms, table)
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let file: TruthSpecFile =
            serde_json::from_str(text).map_err(|e| SearchError::Malformed(e.to_string()))?;
        TruthSpec::from_file(file)
    }

    pub fn to_file(&self, manifest: Option<serde_json::Value>) -> TruthSpecFile {
        let mut truth = IndexMap::new();
        for (i, image) in self.images.iter().enumerate() {
            for (a, atom) in self.atoms.atoms().iter().enumerate() {
                truth.insert(format!("{image}|{atom}"), self.truth[i][a]);
            }
        }
        TruthSpecFile {
            images: self.images.clone(),
            atoms: self.atoms.atoms().iter().map(|a| a.to_string()).collect(),
            truth,
            manifest,
        }
    }

    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn atoms(&self) -> &Vocabulary {
        &self.atoms
    }

    pub fn truth(&self, image: usize, atom: usize) -> bool {
        self.truth[image][atom]
    }

    /// Atomic assignment of one image, for `truth_eval`.
    pub fn assignment(&self, image: usize) -> impl Fn(&Atom) -> bool + '_ {
        move |a: &Atom| self.atoms.position(a).is_some_and(|k| self.truth[image][k])
    }

    /// Every image has a true atom and every atom is true somewhere.
    pub fn describable_target(&self) -> bool {
        self.truth.iter().all(|row| row.iter().any(|&t| t))
            && (0..self.atoms.len()).all(|a| self.truth.iter().any(|row| row[a]))
    }

    /// Every image has a false atom and every atom is false somewhere.
    pub fn separable_target(&self) -> bool {
        self.truth.iter().all(|row| row.iter().any(|&t| !t))
            && (0..self.atoms.len()).all(|a| self.truth.iter().any(|row| !row[a]))
    }
}
