//! Class-stratified k-fold partitioning of whole source images.
//!
//! Splitting happens strictly at the image level: a fold owns image ids,
//! and every patch of an image follows its image. That makes patch-level
//! leakage between a fold's training and test sides impossible by
//! construction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::preprocess::ClassLabel;
use crate::tensor::SeedRng;
use crate::training::TrainingError;

/// A disjoint, covering partition of image ids into k folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Fold index owning the given image, if any.
    pub fn fold_of(&self, image_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|id| id == image_id))
    }

    /// Two-column `image_id,fold` CSV, rows in fold order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,fold\n");
        for (fold, ids) in self.folds.iter().enumerate() {
            for id in ids {
                let _ = writeln!(out, "{id},{fold}");
            }
        }
        out
    }
}

/// Stratified split: images of each class are shuffled under a sub-seed and
/// dealt round-robin across folds, so fold class counts differ by at most
/// one per class. Deterministic in (inputs, seed).
pub fn split_folds(
    images: &[(String, ClassLabel)],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, TrainingError> {
    if k < 2 {
        return Err(TrainingError::BadFoldCount(k));
    }
    let mut ids_seen = std::collections::HashSet::new();
    for (id, _) in images {
        if !ids_seen.insert(id) {
            return Err(TrainingError::DuplicateImage(id.clone()));
        }
    }
    // BTreeMap keeps class iteration order fixed regardless of input order.
    let mut by_class: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, label) in images {
        by_class.entry(label.index()).or_default().push(id.clone());
    }
    let root = SeedRng::new(seed);
    let mut folds = vec![Vec::new(); k];
    for (class_idx, mut ids) in by_class {
        if ids.len() < k {
            return Err(TrainingError::ClassTooSmall {
                label: ClassLabel::from_index(class_idx).expect("index from a label"),
                images: ids.len(),
                k,
            });
        }
        let mut rng = root.derive(&format!("folds/class{class_idx}"));
        rng.shuffle(&mut ids);
        for (i, id) in ids.into_iter().enumerate() {
            folds[i % k].push(id);
        }
    }
    Ok(FoldPlan { folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(per_class: usize) -> Vec<(String, ClassLabel)> {
        let mut out = Vec::new();
        for label in ClassLabel::ALL {
            for i in 0..per_class {
                out.push((format!("{label}_{i:03}"), label));
            }
        }
        out
    }

    fn label_of(id: &str) -> ClassLabel {
        ClassLabel::parse(id.split('_').next().unwrap()).unwrap()
    }

    #[test]
    fn balanced_corpus_splits_evenly() {
        let images = corpus(20); // 80 images, 20 per class
        let plan = split_folds(&images, 5, 1).unwrap();
        assert_eq!(plan.k(), 5);
        for fold in &plan.folds {
            assert_eq!(fold.len(), 16);
            for label in ClassLabel::ALL {
                assert_eq!(fold.iter().filter(|id| label_of(id) == label).count(), 4);
            }
        }
    }

    #[test]
    fn folds_partition_the_input_set() {
        let images = corpus(7);
        let plan = split_folds(&images, 4, 2).unwrap();
        let mut all: Vec<String> = plan.folds.iter().flatten().cloned().collect();
        assert_eq!(all.len(), images.len());
        all.sort();
        let mut want: Vec<String> = images.iter().map(|(id, _)| id.clone()).collect();
        want.sort();
        assert_eq!(all, want);
    }

    #[test]
    fn leave_one_out_when_k_equals_class_count() {
        let images = corpus(3);
        let plan = split_folds(&images, 3, 3).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.len(), 4); // one image of each class
        }
    }

    #[test]
    fn deterministic_under_seed_and_sensitive_to_it() {
        let images = corpus(10);
        assert_eq!(split_folds(&images, 5, 9).unwrap(), split_folds(&images, 5, 9).unwrap());
        assert_ne!(
            split_folds(&images, 5, 9).unwrap().folds,
            split_folds(&images, 5, 10).unwrap().folds
        );
    }

    #[test]
    fn rejects_undersized_classes_and_bad_k() {
        let images = corpus(3);
        assert!(matches!(
            split_folds(&images, 4, 1),
            Err(TrainingError::ClassTooSmall { images: 3, k: 4, .. })
        ));
        assert!(matches!(split_folds(&images, 1, 1), Err(TrainingError::BadFoldCount(1))));
        let mut dup = corpus(2);
        dup.push(dup[0].clone());
        assert!(matches!(split_folds(&dup, 2, 1), Err(TrainingError::DuplicateImage(_))));
    }

    #[test]
    fn fold_of_and_csv_agree() {
        let images = corpus(4);
        let plan = split_folds(&images, 2, 4).unwrap();
        let csv = plan.to_csv();
        assert!(csv.starts_with("image_id,fold\n"));
        for line in csv.lines().skip(1) {
            let (id, fold) = line.split_once(',').unwrap();
            assert_eq!(plan.fold_of(id), Some(fold.parse().unwrap()));
        }
        assert_eq!(plan.fold_of("missing"), None);
    }
}
