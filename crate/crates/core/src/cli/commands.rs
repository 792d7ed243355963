//! Subcommand implementations.
//!
//! Each function does the whole job of one subcommand and returns the
//! one-line summary the binary prints; all machine-readable output goes
//! to files. Every command is deterministic in (inputs, config, seed).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cli::{CliError, RunConfig};
use crate::embedding::{
    aggregate_by_source, embedding_to_tsv, export_feature_maps, extract_features,
    features_to_tsv, tsne_affinities, tsne_embed, write_scatter_svg, TsneConfig,
};
use crate::network::{load_checkpoint, save_checkpoint, InitScheme, Network};
use crate::preprocess::{
    build_manifest, reinhard_transfer, BuildOptions, ClassLabel, Image, LabStats,
    LabeledImage, PatchFormat, PreprocessError, Rotation, StatsAccumulator,
};
use crate::tensor::SeedRng;
use crate::training::{cross_validate, predict_image, train, PatchDataset, StopReason};

/// Where normalization targets come from.
#[derive(Clone, Debug)]
pub enum ReferenceSpec {
    /// A single reference image's channel statistics.
    Image(PathBuf),
    /// Pooled statistics over the whole input corpus.
    DatasetMean,
}

impl ReferenceSpec {
    pub fn parse(s: &str) -> ReferenceSpec {
        if s == "dataset-mean" {
            ReferenceSpec::DatasetMean
        } else {
            ReferenceSpec::Image(PathBuf::from(s))
        }
    }
}

/// What gets color-normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizeMode {
    /// Transfer each source image before patch extraction (default).
    Whole,
    /// Extract from raw images, then transfer every patch file.
    Patch,
    /// No color normalization.
    None,
}

impl NormalizeMode {
    pub fn parse(s: &str) -> Result<NormalizeMode, CliError> {
        match s {
            "whole" => Ok(NormalizeMode::Whole),
            "patch" => Ok(NormalizeMode::Patch),
            "none" => Ok(NormalizeMode::None),
            other => Err(CliError::BadArgument(format!(
                "normalize mode {other:?}; expected whole, patch, or none"
            ))),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a labels file: one `filename<TAB>label` per line, `#` comments.
fn read_labels(path: &Path) -> Result<Vec<(String, ClassLabel)>, CliError> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = line.split_once('\t').ok_or_else(|| CliError::Labels {
            path: path.display().to_string(),
            line: number + 1,
            detail: format!("expected filename<TAB>label, got {line:?}"),
        })?;
        let label = ClassLabel::parse(label.trim()).map_err(|e| CliError::Labels {
            path: path.display().to_string(),
            line: number + 1,
            detail: e.to_string(),
        })?;
        out.push((file.trim().to_string(), label));
    }
    if out.is_empty() {
        return Err(CliError::Labels {
            path: path.display().to_string(),
            line: 0,
            detail: "no labeled images listed".into(),
        })?;
    }
    Ok(out)
}

fn image_stem(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.to_string())
}

fn target_stats(
    reference: &ReferenceSpec,
    corpus: &[LabeledImage],
) -> Result<LabStats, CliError> {
    let mut acc = StatsAccumulator::default();
    match reference {
        ReferenceSpec::Image(path) => acc.push_image(&Image::load(path)?),
        ReferenceSpec::DatasetMean => {
            for labeled in corpus {
                acc.push_image(&labeled.image);
            }
        }
    }
    Ok(acc.finish())
}

/// Extract (optionally color-normalized) patches from a labeled corpus
/// and write the manifest plus patch files into `out_dir`.
pub fn run_preprocess(
    input_dir: &Path,
    labels_file: &Path,
    reference: &str,
    normalize: &str,
    out_dir: &Path,
    config: &RunConfig,
) -> Result<String, CliError> {
    let normalize = NormalizeMode::parse(normalize)?;
    let reference = ReferenceSpec::parse(reference);

    let mut corpus = Vec::new();
    for (file, label) in read_labels(labels_file)? {
        let image = Image::load(&input_dir.join(&file))?;
        corpus.push(LabeledImage { id: image_stem(&file), label, image });
    }

    if normalize == NormalizeMode::Whole {
        let target = target_stats(&reference, &corpus)?;
        corpus = corpus
            .into_par_iter()
            .map(|labeled| LabeledImage {
                image: reinhard_transfer(&labeled.image, &target),
                ..labeled
            })
            .collect();
    }

    let rotations = config
        .rotations
        .iter()
        .map(|&deg| Rotation::from_degrees(deg))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BuildOptions {
        rotations,
        patches_per_image: config.patches_per_image,
        patch_size: config.patch_size,
        seed: config.seed,
        format: PatchFormat::Png,
    };
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let manifest = build_manifest(&corpus, &opts, out_dir)?;

    if normalize == NormalizeMode::Patch {
        let target = target_stats(&reference, &corpus)?;
        manifest
            .records
            .par_iter()
            .try_for_each(|record| -> Result<(), CliError> {
                let path = out_dir.join(&record.patch_path);
                let normalized = reinhard_transfer(&Image::load(&path)?, &target);
                normalized.save(&path)?;
                Ok(())
            })?;
    }

    let manifest_path = out_dir.join("manifest.tsv");
    manifest.write(&manifest_path)?;
    Ok(format!(
        "wrote {} patch records from {} images to {}",
        manifest.records.len(),
        corpus.len(),
        out_dir.display()
    ))
}

fn open_dataset_checked(manifest: &Path, config: &RunConfig) -> Result<PatchDataset, CliError> {
    let dataset = PatchDataset::open(manifest)?;
    if dataset.manifest().patch_size != config.patch_size {
        return Err(CliError::BadConfig(format!(
            "config patch_size is {} but the manifest holds {}x{} patches",
            config.patch_size,
            dataset.manifest().patch_size,
            dataset.manifest().patch_size
        )));
    }
    Ok(dataset)
}

fn stop_reason_str(reason: StopReason) -> &'static str {
    match reason {
        StopReason::Threshold => "threshold",
        StopReason::MaxSteps => "max-steps",
    }
}

/// Train one network on a manifest (optionally holding out whole images)
/// and write the checkpoint plus a `step,loss` report CSV.
pub fn run_train(
    manifest: &Path,
    config: &RunConfig,
    out_model: &Path,
    holdout_images: Option<&Path>,
) -> Result<String, CliError> {
    let dataset = open_dataset_checked(manifest, config)?;

    let holdout: HashSet<String> = match holdout_images {
        Some(path) => read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect(),
        None => HashSet::new(),
    };
    let indices: Vec<usize> = (0..dataset.len())
        .filter(|&i| !holdout.contains(&dataset.record(i).source_image))
        .collect();

    let root = SeedRng::new(config.seed);
    let mut network = Network::build(
        config.network_config(),
        &root.derive("cli/train/init"),
        InitScheme::default(),
    )?;
    let opts = config.train_options(root.derive("cli/train").seed());
    let report = train(&mut network, &dataset, &indices, &opts)?;

    save_checkpoint(&network, out_model)?;
    let report_path = out_model.with_extension("report.csv");
    write_string(&report_path, &report.to_csv())?;

    Ok(format!(
        "stopped after {} steps ({}); window loss {:.6}; wrote {} and {}",
        report.stop_step,
        stop_reason_str(report.reason),
        report.final_window_loss(),
        out_model.display(),
        report_path.display()
    ))
}

/// Cross-validate over the manifest and write per-fold artifacts plus the
/// mean percentage matrix.
pub fn run_crossval(
    manifest: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<String, CliError> {
    let dataset = open_dataset_checked(manifest, config)?;
    let report = cross_validate(
        &dataset,
        &config.network_config(),
        config.k_folds,
        config.seed,
        &config.train_options(0),
        out_dir,
    )?;
    Ok(format!(
        "cross-validated {} folds; mean macro accuracy {:.2}%; artifacts in {}",
        config.k_folds,
        report.mean_macro_accuracy,
        out_dir.display()
    ))
}

/// Classify one image with a trained checkpoint by patch majority vote.
/// The printed line starts with the class name, then the vote counts.
pub fn run_predict(
    model: &Path,
    image_path: &Path,
    config: &RunConfig,
) -> Result<String, CliError> {
    let network = load_checkpoint(model)?;
    let image = Image::load(image_path)?;
    let patch = network.config().input_side;

    let stem = image_stem(&image_path.display().to_string());
    let mut rng = SeedRng::new(config.seed).derive(&format!("predict/{stem}"));
    let samples = crate::preprocess::extract_random_patches(
        &image,
        config.patches_per_image,
        patch,
        &mut rng,
    )?;
    let tensors: Vec<_> = samples.iter().map(|(img, _)| img.to_tensor()).collect();
    let (label, votes) = predict_image(&network, &tensors)?;

    let mut out = label.as_str().to_string();
    for (class, count) in ClassLabel::ALL.iter().zip(&votes) {
        out.push_str(&format!(" {}={}", class.as_str(), count));
    }
    Ok(out)
}

/// Extract class-capsule features for every manifest patch; optionally
/// run t-SNE and write a 2-D embedding (and an SVG scatter).
pub fn run_embed(
    model: &Path,
    manifest: &Path,
    out: &Path,
    tsne: bool,
    svg: Option<&Path>,
    aggregate: bool,
    config: &RunConfig,
) -> Result<String, CliError> {
    let network = load_checkpoint(model)?;
    let dataset = PatchDataset::open(manifest)?;
    if dataset.manifest().patch_size != network.config().input_side {
        return Err(CliError::BadConfig(format!(
            "manifest patches are {0}x{0} but the checkpoint expects {1}x{1}",
            dataset.manifest().patch_size,
            network.config().input_side
        )));
    }

    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rows = extract_features(&network, &dataset, &indices)?;
    if aggregate {
        let sources: Vec<String> = indices
            .iter()
            .map(|&i| dataset.record(i).source_image.clone())
            .collect();
        rows = aggregate_by_source(&rows, &sources)?;
    }

    if !tsne {
        write_string(out, &features_to_tsv(&rows))?;
        return Ok(format!(
            "wrote {} feature rows ({} values each) to {}",
            rows.len(),
            rows.first().map_or(0, |r| r.feature.len()),
            out.display()
        ));
    }

    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.feature.iter().map(|&v| v as f64).collect())
        .collect();
    let affinities = tsne_affinities(&features, config.perplexity)?;
    let tsne_cfg = TsneConfig {
        perplexity: config.perplexity,
        seed: SeedRng::new(config.seed).derive("cli/embed").seed(),
        ..TsneConfig::default()
    };
    let result = tsne_embed(&affinities.joint, &tsne_cfg)?;
    write_string(out, &embedding_to_tsv(&rows, &result.coordinates)?)?;

    if let Some(svg_path) = svg {
        let labels: Vec<ClassLabel> = rows.iter().map(|r| r.label).collect();
        write_scatter_svg(svg_path, &result.coordinates, &labels)?;
    }

    Ok(format!(
        "embedded {} rows; KL {:.4} -> {:.4}; wrote {}",
        rows.len(),
        result.kl_trace.first().unwrap_or(&f64::NAN),
        result.kl_trace.last().unwrap_or(&f64::NAN),
        out.display()
    ))
}

/// Export one conv layer's feature maps for an image as grayscale PNGs.
pub fn run_features(
    model: &Path,
    image_path: &Path,
    layer: usize,
    out_dir: &Path,
) -> Result<String, CliError> {
    let network = load_checkpoint(model)?;
    let mut image = Image::load(image_path)?;
    // Oversized inputs are center-cropped to the network's input size;
    // undersized ones fail with the usual too-small error.
    let side = network.config().input_side;
    if image.width() != side || image.height() != side {
        if image.width() < side || image.height() < side {
            return Err(PreprocessError::ImageTooSmall {
                width: image.width(),
                height: image.height(),
                size: side,
            }
            .into());
        }
        let x = (image.width() - side) / 2;
        let y = (image.height() - side) / 2;
        image = image.crop(x, y, side, side)?;
    }
    let paths = export_feature_maps(&network, &image, layer, out_dir)?;
    Ok(format!(
        "wrote {} feature maps for layer {} to {}",
        paths.len(),
        layer,
        out_dir.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_mode_strings() {
        assert_eq!(NormalizeMode::parse("whole").unwrap(), NormalizeMode::Whole);
        assert_eq!(NormalizeMode::parse("patch").unwrap(), NormalizeMode::Patch);
        assert_eq!(NormalizeMode::parse("none").unwrap(), NormalizeMode::None);
        assert!(NormalizeMode::parse("both").is_err());
    }

    #[test]
    fn reference_spec_distinguishes_dataset_mean() {
        assert!(matches!(ReferenceSpec::parse("dataset-mean"), ReferenceSpec::DatasetMean));
        assert!(matches!(ReferenceSpec::parse("ref.png"), ReferenceSpec::Image(_)));
    }

    #[test]
    fn labels_parser_reports_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        fs::write(&path, "a.png\tnormal\n# comment\nb.png\tmalignant\n").unwrap();
        match read_labels(&path) {
            Err(CliError::Labels { line, detail, .. }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("malignant"), "detail: {detail}");
            }
            other => panic!("expected labels error, got {other:?}"),
        }
        fs::write(&path, "a.png normal\n").unwrap();
        assert!(matches!(read_labels(&path), Err(CliError::Labels { line: 1, .. })));
        fs::write(&path, "a.png\tinsitu\n").unwrap();
        let labels = read_labels(&path).unwrap();
        assert_eq!(labels, vec![("a.png".to_string(), ClassLabel::Insitu)]);
    }

    #[test]
    fn stems_drop_extensions_only() {
        assert_eq!(image_stem("slide_01.png"), "slide_01");
        assert_eq!(image_stem("noext"), "noext");
    }
}
