use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SearchError, TruthSpec};
use crate::geometry::{norm, LatentVector, ZERO_NORM};
use crate::logic::Vocabulary;
use crate::semantics::{is_describable, is_separable, required_captions, ClipLikeModel, Metric};

const MAX_RESAMPLE_ROUNDS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Plain coin flips.
    Unconstrained,
    /// Rows and columns resampled until the target is describable and
    /// separable.
    Separable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomConfig {
    pub model: ClipLikeModel,
    pub spec: TruthSpec,
    /// Properties of the model's own satisfaction relation, which need not
    /// match the target.
    pub model_describable: bool,
    pub model_separable: bool,
}

fn row_ok(row: &[bool]) -> bool {
    row.iter().any(|&t| t) && row.iter().any(|&t| !t)
}

/// Seeded random target and model. Images are `i1..`, atoms `a1..`; the
/// caption table covers every description needed to audit at `depth`.
pub fn random_config(
    n_images: usize,
    n_atoms: usize,
    dim: usize,
    seed: u64,
    mode: TargetMode,
    depth: usize,
) -> Result<RandomConfig, SearchError> {
    if dim < 2 {
        return Err(SearchError::Param(format!("dim must be at least 2, got {dim}")));
    }
    if n_images == 0 || n_atoms == 0 {
        return Err(SearchError::Param("at least one image and one atom are required".into()));
    }
    if mode == TargetMode::Separable && (n_images < 2 || n_atoms < 2) {
        return Err(SearchError::Param(format!(
            "a separable target needs at least 2 images and 2 atoms, got {n_images} x {n_atoms}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth: Vec<Vec<bool>> =
        (0..n_images).map(|_| (0..n_atoms).map(|_| rng.gen_bool(0.5)).collect()).collect();
    if mode == TargetMode::Separable {
        let mut rounds = 0;
        loop {
            let column = |t: &Vec<Vec<bool>>, a: usize| t.iter().map(|row| row[a]).collect::<Vec<_>>();
            let rows_good = truth.iter().all(|r| row_ok(r));
            let cols_good = (0..n_atoms).all(|a| row_ok(&column(&truth, a)));
            if rows_good && cols_good {
                break;
            }
            rounds += 1;
            if rounds > MAX_RESAMPLE_ROUNDS {
                return Err(SearchError::Param("could not draw a separable target".into()));
            }
            for row in truth.iter_mut() {
                if !row_ok(row) {
                    row.iter_mut().for_each(|t| *t = rng.gen_bool(0.5));
                }
            }
            for a in 0..n_atoms {
                if !row_ok(&column(&truth, a)) {
                    for row in truth.iter_mut() {
                        row[a] = rng.gen_bool(0.5);
                    }
                }
            }
        }
    }

    let images: Vec<String> = (1..=n_images).map(|k| format!("i{k}")).collect();
    let atoms: Vec<String> = (1..=n_atoms).map(|k| format!("a{k}")).collect();
    let vocab = Vocabulary::from_strs(&atoms)?;
    let spec = TruthSpec::new(images.clone(), vocab.clone(), truth)?;

    let mut draw = || -> LatentVector {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = norm(&v);
            if n >= ZERO_NORM {
                return LatentVector::new(v.into_iter().map(|c| c / n).collect()).expect("finite draw");
            }
        }
    };
    let image_table: IndexMap<String, LatentVector> = images.into_iter().map(|id| (id, draw())).collect();
    let caption_table: IndexMap<String, LatentVector> = required_captions(&vocab, depth)?
        .into_iter()
        .map(|d| (d.render(), draw()))
        .collect();
    let model = ClipLikeModel::new(dim, Metric::Cosine, vocab, image_table, caption_table)?;
    let model_describable = is_describable(&model)?;
    let model_separable = is_separable(&model)?;
    Ok(RandomConfig { model, spec, model_describable, model_separable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_targets() {
        for seed in 0..20 {
            let rc = random_config(2, 2, 2, seed, TargetMode::Separable, 1).unwrap();
            assert!(rc.spec.separable_target() && rc.spec.describable_target());
        }
        let rc = random_config(5, 4, 8, 1, TargetMode::Separable, 0).unwrap();
        assert!(rc.spec.separable_target());
    }

    #[test]
    fn degenerate_sizes() {
        assert!(matches!(random_config(1, 1, 2, 0, TargetMode::Separable, 1), Err(SearchError::Param(_))));
        assert!(matches!(random_config(2, 2, 1, 0, TargetMode::Separable, 1), Err(SearchError::Param(_))));
        assert!(random_config(1, 1, 2, 0, TargetMode::Unconstrained, 1).is_ok());
    }

    #[test]
    fn deterministic() {
        let a = random_config(3, 2, 4, 9, TargetMode::Separable, 1).unwrap();
        let b = random_config(3, 2, 4, 9, TargetMode::Separable, 1).unwrap();
        assert_eq!(a, b);
        let c = random_config(3, 2, 4, 10, TargetMode::Separable, 1).unwrap();
        assert_ne!(a.model, c.model);
    }
}
