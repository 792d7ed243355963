//! Class-capsule feature extraction.
//!
//! A patch's feature vector is the concatenation of every class capsule's
//! output vector (not just the winner's), so downstream embeddings see the
//! whole final layer.

use rayon::prelude::*;

use crate::embedding::EmbeddingError;
use crate::network::Network;
use crate::preprocess::ClassLabel;
use crate::training::PatchDataset;

/// One patch's identity, class, and capsule-layer feature vector.
#[derive(Clone, Debug)]
pub struct FeatureRow {
    pub patch_id: String,
    pub label: ClassLabel,
    pub feature: Vec<f32>,
}

/// Run the network over the selected patches and collect one feature row
/// per patch, in `indices` order. Feature length is always
/// `class_capsules * class_capsule_dim`.
pub fn extract_features(
    network: &Network<f32>,
    dataset: &PatchDataset,
    indices: &[usize],
) -> Result<Vec<FeatureRow>, EmbeddingError> {
    indices
        .par_iter()
        .map(|&i| {
            let input = dataset.load_tensor(i)?;
            let pass = network.forward(&input)?;
            let mut feature =
                Vec::with_capacity(pass.class_capsules.len() * pass.class_capsules[0].len());
            for capsule in &pass.class_capsules {
                feature.extend_from_slice(capsule);
            }
            Ok(FeatureRow {
                patch_id: dataset.record(i).patch_id.clone(),
                label: dataset.label(i),
                feature,
            })
        })
        .collect()
}

/// Average patch rows into one row per source image (first-seen order).
///
/// `sources[i]` names the source image of `rows[i]`; the aggregated row
/// borrows the source id as its `patch_id`.
pub fn aggregate_by_source(
    rows: &[FeatureRow],
    sources: &[String],
) -> Result<Vec<FeatureRow>, EmbeddingError> {
    if rows.len() != sources.len() {
        return Err(EmbeddingError::LengthMismatch {
            points: rows.len(),
            labels: sources.len(),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut sums: std::collections::HashMap<String, (ClassLabel, Vec<f64>, usize)> =
        std::collections::HashMap::new();
    for (row, source) in rows.iter().zip(sources) {
        let entry = sums.entry(source.clone()).or_insert_with(|| {
            order.push(source.clone());
            (row.label, vec![0.0; row.feature.len()], 0)
        });
        if entry.1.len() != row.feature.len() {
            return Err(EmbeddingError::RaggedFeatures {
                got: row.feature.len(),
                want: entry.1.len(),
            });
        }
        for (acc, &v) in entry.1.iter_mut().zip(&row.feature) {
            *acc += v as f64;
        }
        entry.2 += 1;
    }
    Ok(order
        .into_iter()
        .map(|source| {
            let (label, sum, count) = sums.remove(&source).expect("source was inserted");
            FeatureRow {
                patch_id: source,
                label,
                feature: sum.into_iter().map(|v| (v / count as f64) as f32).collect(),
            }
        })
        .collect())
}

/// Serialize rows as TSV: `patch_id, label, f0..f{d-1}`.
pub fn features_to_tsv(rows: &[FeatureRow]) -> String {
    let width = rows.first().map_or(0, |r| r.feature.len());
    let mut out = String::from("patch_id\tlabel");
    for i in 0..width {
        out.push_str(&format!("\tf{i}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.patch_id);
        out.push('\t');
        out.push_str(row.label.as_str());
        for v in &row.feature {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}
