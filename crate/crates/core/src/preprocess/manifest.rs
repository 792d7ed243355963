//! Dataset manifest: which patches exist, where they came from, and where
//! they live on disk.
//!
//! The on-disk form is a tab-separated UTF-8 file. Two `#` metadata lines
//! (patch size and seed) precede the header row; the columns are patch_id,
//! source_image, class_label, rotation_deg, origin_x, origin_y, patch_path.
//! Patch paths are relative to the manifest's directory.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::preprocess::image::{Image, Rotation};
use crate::preprocess::patches::extract_random_patches;
use crate::preprocess::PreprocessError;
use crate::tensor::SeedRng;

/// The four tissue classes, in canonical index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Normal,
    Benign,
    Insitu,
    Invasive,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] =
        [ClassLabel::Normal, ClassLabel::Benign, ClassLabel::Insitu, ClassLabel::Invasive];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Benign => 1,
            ClassLabel::Insitu => 2,
            ClassLabel::Invasive => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<ClassLabel> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Benign => "benign",
            ClassLabel::Insitu => "insitu",
            ClassLabel::Invasive => "invasive",
        }
    }

    pub fn parse(s: &str) -> Result<ClassLabel, PreprocessError> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| PreprocessError::UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One extracted patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchRecord {
    pub patch_id: String,
    pub source_image: String,
    pub class_label: ClassLabel,
    pub rotation_deg: u32,
    pub origin_x: usize,
    pub origin_y: usize,
    /// Relative to the manifest file's directory.
    pub patch_path: String,
}

/// A full extracted dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<PatchRecord>,
    pub patch_size: usize,
    pub seed: u64,
}

const HEADER: &str =
    "patch_id\tsource_image\tclass_label\trotation_deg\torigin_x\torigin_y\tpatch_path";

impl DatasetManifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# patch_size={}\n", self.patch_size));
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.patch_id,
                r.source_image,
                r.class_label,
                r.rotation_deg,
                r.origin_x,
                r.origin_y,
                r.patch_path
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<DatasetManifest, PreprocessError> {
        let mut patch_size = None;
        let mut seed = None;
        let mut header_seen = false;
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let parse_err = |detail: &str| PreprocessError::ManifestParse {
                line: line_no + 1,
                detail: detail.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                match meta.trim().split_once('=') {
                    Some(("patch_size", v)) => {
                        patch_size =
                            Some(v.parse().map_err(|_| parse_err("bad patch_size value"))?)
                    }
                    Some(("seed", v)) => {
                        seed = Some(v.parse().map_err(|_| parse_err("bad seed value"))?)
                    }
                    _ => {} // unknown comments are ignored
                }
                continue;
            }
            if !header_seen {
                if line != HEADER {
                    return Err(parse_err("missing or malformed header row"));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(parse_err(&format!("{} columns, want 7", fields.len())));
            }
            records.push(PatchRecord {
                patch_id: fields[0].to_string(),
                source_image: fields[1].to_string(),
                class_label: ClassLabel::parse(fields[2])
                    .map_err(|_| parse_err(&format!("unknown class label `{}`", fields[2])))?,
                rotation_deg: {
                    let deg =
                        fields[3].parse().map_err(|_| parse_err("bad rotation_deg"))?;
                    Rotation::from_degrees(deg)?;
                    deg
                },
                origin_x: fields[4].parse().map_err(|_| parse_err("bad origin_x"))?,
                origin_y: fields[5].parse().map_err(|_| parse_err("bad origin_y"))?,
                patch_path: fields[6].to_string(),
            });
        }
        let patch_size = patch_size
            .ok_or(PreprocessError::ManifestParse { line: 0, detail: "missing # patch_size".into() })?;
        let seed = seed
            .ok_or(PreprocessError::ManifestParse { line: 0, detail: "missing # seed".into() })?;
        if !header_seen {
            return Err(PreprocessError::ManifestParse { line: 0, detail: "missing header".into() });
        }
        Ok(DatasetManifest { records, patch_size, seed })
    }

    pub fn write(&self, path: &Path) -> Result<(), PreprocessError> {
        fs::write(path, self.to_tsv())
            .map_err(|e| PreprocessError::Io { path: path.display().to_string(), source: e })
    }

    pub fn read(path: &Path) -> Result<DatasetManifest, PreprocessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PreprocessError::Io { path: path.display().to_string(), source: e })?;
        Self::from_tsv(&text)
    }

    /// Distinct source image ids with their labels, in first-seen order.
    pub fn source_images(&self) -> Vec<(String, ClassLabel)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.source_image.clone()) {
                out.push((r.source_image.clone(), r.class_label));
            }
        }
        out
    }
}

/// An input image with its identity and class.
#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub id: String,
    pub label: ClassLabel,
    pub image: Image,
}

/// On-disk encoding for extracted patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchFormat {
    Png,
    Ppm,
}

impl PatchFormat {
    fn extension(self) -> &'static str {
        match self {
            PatchFormat::Png => "png",
            PatchFormat::Ppm => "ppm",
        }
    }
}

/// Extraction parameters for [`build_manifest`].
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub rotations: Vec<Rotation>,
    pub patches_per_image: usize,
    pub patch_size: usize,
    pub seed: u64,
    pub format: PatchFormat,
}

/// Cut `|rotations| x patches_per_image` patches from every labeled image,
/// write them under `out_dir`, and return the manifest describing them.
///
/// Each (image, rotation) pair draws from its own sub-seed of the global
/// seed, so the result is identical no matter how work is scheduled; the
/// extraction itself runs image-parallel.
pub fn build_manifest(
    images: &[LabeledImage],
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<DatasetManifest, PreprocessError> {
    if opts.rotations.is_empty() {
        return Err(PreprocessError::EmptyRotations);
    }
    if opts.patches_per_image == 0 {
        return Err(PreprocessError::BadPatchSize(0));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| PreprocessError::Io { path: out_dir.display().to_string(), source: e })?;
    let root = SeedRng::new(opts.seed);

    let per_image: Vec<Vec<PatchRecord>> = images
        .par_iter()
        .map(|labeled| -> Result<Vec<PatchRecord>, PreprocessError> {
            let mut records = Vec::with_capacity(opts.rotations.len() * opts.patches_per_image);
            for &rotation in &opts.rotations {
                let deg = rotation.degrees();
                let rotated = labeled.image.rotate(rotation);
                let mut rng = root.derive(&format!("patches/{}/{}", labeled.id, deg));
                let patches =
                    extract_random_patches(&rotated, opts.patches_per_image, opts.patch_size, &mut rng)?;
                for (idx, (patch, (x, y))) in patches.iter().enumerate() {
                    let patch_id = format!("{}_r{deg}_p{idx:04}", labeled.id);
                    let file = format!("{patch_id}.{}", opts.format.extension());
                    patch.save(&out_dir.join(&file))?;
                    records.push(PatchRecord {
                        patch_id,
                        source_image: labeled.id.clone(),
                        class_label: labeled.label,
                        rotation_deg: deg,
                        origin_x: *x,
                        origin_y: *y,
                        patch_path: file,
                    });
                }
            }
            Ok(records)
        })
        .collect::<Result<_, _>>()?;

    Ok(DatasetManifest {
        records: per_image.into_iter().flatten().collect(),
        patch_size: opts.patch_size,
        seed: opts.seed,
    })
}
