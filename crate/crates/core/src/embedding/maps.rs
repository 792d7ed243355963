//! Convolutional feature-map export.
//!
//! Writes one grayscale PNG per feature map of a chosen conv layer, each
//! min-max normalized to the full 8-bit range (a constant map has no
//! range and renders mid-gray).

use std::path::{Path, PathBuf};

use crate::embedding::EmbeddingError;
use crate::network::Network;
use crate::preprocess::Image;

/// Run `image` through the network and export layer `layer_index`
/// (1-based) as grayscale PNGs named `map000.png`, `map001.png`, … under
/// `out_dir`. Returns the written paths in map order.
pub fn export_feature_maps(
    network: &Network<f32>,
    image: &Image,
    layer_index: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EmbeddingError> {
    let layers = network.config().conv_layers.len();
    if layer_index == 0 || layer_index > layers {
        return Err(EmbeddingError::LayerOutOfRange { layer: layer_index, layers });
    }
    std::fs::create_dir_all(out_dir).map_err(|source| EmbeddingError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let pass = network.forward(&image.to_tensor())?;
    let activation = pass
        .conv_activation(layer_index - 1)
        .expect("index validated against config above");
    let (maps, height, width) = activation.dims3().map_err(crate::network::NetworkError::from)?;

    let mut paths = Vec::with_capacity(maps);
    for m in 0..maps {
        let plane = &activation.data()[m * height * width..(m + 1) * height * width];
        let lo = plane.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let pixels: Vec<u8> = if hi > lo {
            plane
                .iter()
                .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round() as u8)
                .collect()
        } else {
            vec![128; plane.len()]
        };
        let path = out_dir.join(format!("map{m:03}.png"));
        image::save_buffer_with_format(
            &path,
            &pixels,
            width as u32,
            height as u32,
            image::ColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| EmbeddingError::Encode(e.to_string()))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, ConvLayer, InitScheme, NetworkConfig};
    use crate::tensor::SeedRng;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            input_channels: 3,
            input_side: 12,
            conv_layers: vec![
                ConvLayer { out_maps: 4, kernel: 3, stride: 2 },
                ConvLayer { out_maps: 8, kernel: 3, stride: 2 },
            ],
            activation: Activation::Relu,
            primary_capsule_dim: 4,
            class_capsules: 4,
            class_capsule_dim: 6,
            routing_iterations: 2,
        }
    }

    fn sample_image() -> Image {
        let mut img = Image::filled(12, 12, [0, 0, 0]).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                img.set_pixel(x, y, [(x * 20) as u8, (y * 20) as u8, 128]);
            }
        }
        img
    }

    #[test]
    fn writes_one_png_per_map_with_layer_extent() {
        let dir = tempfile::tempdir().unwrap();
        let net =
            Network::build(tiny_config(), &SeedRng::new(4), InitScheme::default()).unwrap();
        let paths =
            export_feature_maps(&net, &sample_image(), 1, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        for p in &paths {
            let decoded = image::open(p).unwrap();
            // Layer 1: (12 - 3) / 2 + 1 = 5.
            assert_eq!((decoded.width(), decoded.height()), (5, 5));
        }
        let paths2 =
            export_feature_maps(&net, &sample_image(), 2, dir.path()).unwrap();
        assert_eq!(paths2.len(), 8);
        let decoded = image::open(&paths2[0]).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (2, 2));
    }

    #[test]
    fn constant_map_renders_mid_gray() {
        let dir = tempfile::tempdir().unwrap();
        // Zero weights: every activation is the (zero) bias, a constant map.
        let net = Network::<f32>::zeros(tiny_config()).unwrap();
        let paths = export_feature_maps(&net, &sample_image(), 1, dir.path()).unwrap();
        let decoded = image::open(&paths[0]).unwrap().into_luma8();
        assert!(decoded.pixels().all(|p| p.0[0] == 128));
    }

    #[test]
    fn rejects_out_of_range_layer_index() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::<f32>::zeros(tiny_config()).unwrap();
        for bad in [0usize, 3, 99] {
            assert!(matches!(
                export_feature_maps(&net, &sample_image(), bad, dir.path()),
                Err(EmbeddingError::LayerOutOfRange { layers: 2, .. })
            ));
        }
    }
}
