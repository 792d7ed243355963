//! Access to extracted patches through their manifest.
//!
//! Patches load lazily from disk (paths resolve relative to the manifest's
//! directory), so datasets larger than memory train fine; batch loads
//! decode in parallel but always return in index order.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::preprocess::{ClassLabel, DatasetManifest, Image, PatchRecord};
use crate::tensor::Tensor;
use crate::training::TrainingError;

/// A manifest bound to the directory its patch paths are relative to.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    manifest: DatasetManifest,
    base_dir: PathBuf,
}

impl PatchDataset {
    pub fn new(manifest: DatasetManifest, base_dir: PathBuf) -> Self {
        PatchDataset { manifest, base_dir }
    }

    /// Read a manifest file; patch paths resolve against its parent.
    pub fn open(manifest_path: &Path) -> Result<Self, TrainingError> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let base_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(PatchDataset { manifest, base_dir })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn record(&self, index: usize) -> &PatchRecord {
        &self.manifest.records[index]
    }

    pub fn label(&self, index: usize) -> ClassLabel {
        self.manifest.records[index].class_label
    }

    /// Decode one patch into a `[3, size, size]` tensor in `[0, 1]`.
    pub fn load_tensor(&self, index: usize) -> Result<Tensor<f32>, TrainingError> {
        let record = &self.manifest.records[index];
        let image = Image::load(&self.base_dir.join(&record.patch_path))?;
        let size = self.manifest.patch_size;
        if image.width() != size || image.height() != size {
            return Err(TrainingError::PatchSizeMismatch {
                patch_id: record.patch_id.clone(),
                got: (image.width(), image.height()),
                want: size,
            });
        }
        Ok(image.to_tensor())
    }

    /// Decode many patches, in parallel, preserving `indices` order.
    pub fn load_batch(&self, indices: &[usize]) -> Result<Vec<Tensor<f32>>, TrainingError> {
        indices.par_iter().map(|&i| self.load_tensor(i)).collect()
    }

    /// Indices of all patches whose source image is in `images`.
    pub fn indices_for_images(&self, images: &HashSet<String>) -> Vec<usize> {
        self.manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| images.contains(&r.source_image))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of one image's patches, in record order.
    pub fn indices_of_image(&self, image_id: &str) -> Vec<usize> {
        self.manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.source_image == image_id)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::image::Rotation;
    use crate::preprocess::{build_manifest, synthesize_dataset, BuildOptions, PatchFormat};

    fn sample_dataset(dir: &Path) -> PatchDataset {
        let corpus = synthesize_dataset(2, 24, 5);
        let opts = BuildOptions {
            rotations: vec![Rotation::R0, Rotation::R90],
            patches_per_image: 3,
            patch_size: 12,
            seed: 5,
            format: PatchFormat::Ppm,
        };
        let manifest = build_manifest(&corpus, &opts, dir).unwrap();
        let path = dir.join("manifest.tsv");
        manifest.write(&path).unwrap();
        PatchDataset::open(&path).unwrap()
    }

    #[test]
    fn opens_and_loads_patches_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(dir.path());
        assert_eq!(ds.len(), 8 * 2 * 3);
        let t = ds.load_tensor(0).unwrap();
        assert_eq!(t.shape(), &[3, 12, 12]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn batch_load_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(dir.path());
        let indices = [7usize, 0, 3, 3];
        let batch = ds.load_batch(&indices).unwrap();
        assert_eq!(batch.len(), 4);
        for (got, &i) in batch.iter().zip(&indices) {
            assert_eq!(got.data(), ds.load_tensor(i).unwrap().data());
        }
    }

    #[test]
    fn image_index_lookup_matches_records() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(dir.path());
        let first_image = ds.record(0).source_image.clone();
        let idx = ds.indices_of_image(&first_image);
        assert_eq!(idx.len(), 6);
        assert!(idx.iter().all(|&i| ds.record(i).source_image == first_image));

        let set: HashSet<String> = [first_image].into_iter().collect();
        assert_eq!(ds.indices_for_images(&set), idx);
    }

    #[test]
    fn size_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(dir.path());
        // Overwrite one patch with the wrong extent.
        let victim = ds.record(2).patch_path.clone();
        Image::filled(5, 5, [1, 2, 3]).unwrap().save(&dir.path().join(&victim)).unwrap();
        assert!(matches!(
            ds.load_tensor(2),
            Err(TrainingError::PatchSizeMismatch { got: (5, 5), want: 12, .. })
        ));
    }
}
