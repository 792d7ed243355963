//! Stratified k-fold cross-validation over whole source images.
//!
//! Folds partition source images (never patches), so no image contributes
//! patches to both the training and evaluation sides of any fold. Each
//! fold trains a fresh network from a derived sub-seed and scores the
//! held-out images by patch-majority vote.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::network::{save_checkpoint, InitScheme, Network, NetworkConfig};
use crate::preprocess::ClassLabel;
use crate::tensor::SeedRng;
use crate::training::{
    matrix_to_csv, mean_percentage_matrix, percent_matrix_to_csv, predict_image,
    split_folds, train, ConfusionMatrix, FoldPlan, PatchDataset, TrainOptions,
    TrainReport, TrainingError, CLASSES,
};

/// Everything produced while running one fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_images: Vec<String>,
    pub report: TrainReport,
    pub matrix: ConfusionMatrix,
    pub checkpoint_path: PathBuf,
}

/// Aggregate result of a full cross-validation run.
#[derive(Clone, Debug)]
pub struct CrossvalReport {
    pub plan: FoldPlan,
    pub outcomes: Vec<FoldOutcome>,
    /// Elementwise mean of the folds' row-percentage matrices.
    pub mean_percent: [[f64; CLASSES]; CLASSES],
    /// Mean of the mean matrix's diagonal.
    pub mean_macro_accuracy: f64,
}

fn write_text(path: &Path, text: &str) -> Result<(), TrainingError> {
    fs::write(path, text).map_err(|source| TrainingError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Run k-fold cross-validation, writing per-fold checkpoints
/// (`fold{F}.capn`), matrices (`fold{F}_matrix.csv`), loss histories
/// (`fold{F}_report.csv`), the fold plan (`folds.csv`), and the mean
/// percentage matrix (`mean_matrix.csv`) into `out_dir`.
pub fn cross_validate(
    dataset: &PatchDataset,
    config: &NetworkConfig,
    k: usize,
    seed: u64,
    train_opts: &TrainOptions,
    out_dir: &Path,
) -> Result<CrossvalReport, TrainingError> {
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let patch = dataset.manifest().patch_size;
    if config.input_side != patch {
        return Err(TrainingError::PatchNetworkMismatch {
            patch,
            input_side: config.input_side,
        });
    }

    fs::create_dir_all(out_dir).map_err(|source| TrainingError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let images = dataset.manifest().source_images();
    let plan = split_folds(&images, k, seed)?;
    write_text(&out_dir.join("folds.csv"), &plan.to_csv())?;

    let root = SeedRng::new(seed);
    let mut outcomes = Vec::with_capacity(k);
    let mut percents = Vec::with_capacity(k);

    for fold in 0..k {
        let test_images = plan.folds[fold].clone();
        let test_set: HashSet<String> = test_images.iter().cloned().collect();
        let train_indices: Vec<usize> = (0..dataset.len())
            .filter(|&i| !test_set.contains(&dataset.record(i).source_image))
            .collect();

        let init_rng = root.derive(&format!("crossval/fold{fold}/init"));
        let mut network =
            Network::build(config.clone(), &init_rng, InitScheme::default())?;
        let fold_opts = TrainOptions {
            seed: root.derive(&format!("crossval/fold{fold}/train")).seed(),
            ..train_opts.clone()
        };
        let report = train(&mut network, dataset, &train_indices, &fold_opts)?;

        let mut matrix = ConfusionMatrix::new();
        for image_id in &test_images {
            let indices = dataset.indices_of_image(image_id);
            let patches = dataset.load_batch(&indices)?;
            let (predicted, _votes) = predict_image(&network, &patches)?;
            let truth = truth_of(&images, image_id)?;
            matrix.record(truth, predicted);
        }

        let checkpoint_path = out_dir.join(format!("fold{fold}.capn"));
        save_checkpoint(&network, &checkpoint_path)?;
        write_text(&out_dir.join(format!("fold{fold}_matrix.csv")), &matrix_to_csv(&matrix))?;
        write_text(&out_dir.join(format!("fold{fold}_report.csv")), &report.to_csv())?;

        percents.push(matrix.row_percentages());
        outcomes.push(FoldOutcome { fold, test_images, report, matrix, checkpoint_path });
    }

    let mean_percent = mean_percentage_matrix(&percents)?;
    write_text(&out_dir.join("mean_matrix.csv"), &percent_matrix_to_csv(&mean_percent))?;
    let mean_macro_accuracy =
        (0..CLASSES).map(|c| mean_percent[c][c]).sum::<f64>() / CLASSES as f64;

    Ok(CrossvalReport { plan, outcomes, mean_percent, mean_macro_accuracy })
}

fn truth_of(
    images: &[(String, ClassLabel)],
    image_id: &str,
) -> Result<ClassLabel, TrainingError> {
    images
        .iter()
        .find(|(id, _)| id == image_id)
        .map(|(_, label)| *label)
        .ok_or_else(|| TrainingError::UnknownImage(image_id.to_string()))
}
