//! 8-bit RGB images: rotation, cropping, tensor conversion, and file IO.
//!
//! Two file formats are supported: PNG and binary PPM (P6). Loading sniffs
//! the magic bytes, so either format works regardless of extension; saving
//! picks the format from the extension.

use std::fs;
use std::path::Path;

use crate::preprocess::PreprocessError;
use crate::tensor::{Scalar, Tensor};

/// Interleaved row-major RGB, 8 bits per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// The three augmentation angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rotation {
    R0,
    R90,
    R180,
}

impl Rotation {
    pub const ALL: [Rotation; 3] = [Rotation::R0, Rotation::R90, Rotation::R180];

    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self, PreprocessError> {
        match deg {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            other => Err(PreprocessError::UnsupportedRotation(other)),
        }
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 {
            return Err(PreprocessError::BadImage("zero image extent".into()));
        }
        if data.len() != width * height * 3 {
            return Err(PreprocessError::BadImage(format!(
                "{}x{} RGB needs {} bytes, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, PreprocessError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Image::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Lossless pixel permutation. 90 degrees turns clockwise and swaps the
    /// extents; 180 reverses both axes.
    pub fn rotate(&self, rotation: Rotation) -> Image {
        match rotation {
            Rotation::R0 => self.clone(),
            Rotation::R90 => {
                let (w, h) = (self.height, self.width);
                let mut out = vec![0u8; self.data.len()];
                for y in 0..h {
                    for x in 0..w {
                        // Clockwise: output (x, y) reads input (y, H-1-x).
                        let src = ((self.height - 1 - x) * self.width + y) * 3;
                        let dst = (y * w + x) * 3;
                        out[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
                    }
                }
                Image { width: w, height: h, data: out }
            }
            Rotation::R180 => {
                let mut out = vec![0u8; self.data.len()];
                for y in 0..self.height {
                    for x in 0..self.width {
                        let src = ((self.height - 1 - y) * self.width + (self.width - 1 - x)) * 3;
                        let dst = (y * self.width + x) * 3;
                        out[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
                    }
                }
                Image { width: self.width, height: self.height, data: out }
            }
        }
    }

    /// Axis-aligned crop; the window must lie fully inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image, PreprocessError> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(PreprocessError::BadCrop {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Image { width: w, height: h, data })
    }

    /// `[3, height, width]` tensor with values in `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let area = self.width * self.height;
        let mut out = vec![T::zero(); 3 * area];
        let scale = T::from_f64(1.0 / 255.0);
        for (pix, chunk) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * area + pix] = T::from_f64(chunk[c] as f64) * scale;
            }
        }
        Tensor::new(vec![3, self.height, self.width], out).expect("image extents are positive")
    }

    pub fn save(&self, path: &Path) -> Result<(), PreprocessError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => self.save_ppm(path),
            Some("png") => self.save_png(path),
            other => Err(PreprocessError::BadImage(format!(
                "cannot pick a format for extension {other:?} (use .png or .ppm)"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Image, PreprocessError> {
        let bytes = fs::read(path)
            .map_err(|e| PreprocessError::Io { path: path.display().to_string(), source: e })?;
        if bytes.starts_with(b"P6") {
            Image::decode_ppm(&bytes)
        } else {
            Image::decode_png(&bytes)
        }
        .map_err(|e| match e {
            PreprocessError::BadImage(msg) => {
                PreprocessError::BadImage(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    fn save_png(&self, path: &Path) -> Result<(), PreprocessError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| PreprocessError::BadImage(format!("{}: {e}", path.display())))
    }

    fn decode_png(bytes: &[u8]) -> Result<Image, PreprocessError> {
        let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| PreprocessError::BadImage(format!("png decode: {e}")))?
            .to_rgb8();
        let (w, h) = decoded.dimensions();
        Image::new(w as usize, h as usize, decoded.into_raw())
    }

    fn save_ppm(&self, path: &Path) -> Result<(), PreprocessError> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        fs::write(path, out)
            .map_err(|e| PreprocessError::Io { path: path.display().to_string(), source: e })
    }

    fn decode_ppm(bytes: &[u8]) -> Result<Image, PreprocessError> {
        let mut pos = 0usize;
        // Header tokens separated by whitespace; '#' starts a comment that
        // runs to end of line.
        let mut token = |bytes: &[u8]| -> Result<String, PreprocessError> {
            while pos < bytes.len() {
                match bytes[pos] {
                    b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                    b'#' => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(PreprocessError::BadImage("ppm: truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(bytes)?;
        if magic != "P6" {
            return Err(PreprocessError::BadImage(format!("ppm: magic `{magic}`, want P6")));
        }
        let width: usize = token(bytes)?
            .parse()
            .map_err(|_| PreprocessError::BadImage("ppm: bad width".into()))?;
        let height: usize = token(bytes)?
            .parse()
            .map_err(|_| PreprocessError::BadImage("ppm: bad height".into()))?;
        let maxval = token(bytes)?;
        if maxval != "255" {
            return Err(PreprocessError::BadImage(format!("ppm: maxval {maxval}, want 255")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err(PreprocessError::BadImage(format!(
                "ppm: raster needs {need} bytes, {} present",
                bytes.len().saturating_sub(pos)
            )));
        }
        Image::new(width, height, bytes[pos..pos + need].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeedRng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SeedRng::new(seed);
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.next_index(256) as u8).collect();
        Image::new(w, h, data).unwrap()
    }

    fn sorted_pixels(img: &Image) -> Vec<[u8; 3]> {
        let mut px: Vec<[u8; 3]> =
            img.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        px.sort_unstable();
        px
    }

    #[test]
    fn new_validates_extents_and_length() {
        assert!(Image::new(0, 4, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0; 11]).is_err());
        assert!(Image::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn rotate_180_twice_is_identity() {
        let img = random_image(7, 5, 1);
        assert_eq!(img.rotate(Rotation::R180).rotate(Rotation::R180), img);
    }

    #[test]
    fn rotate_90_four_times_is_identity() {
        let img = random_image(6, 4, 2);
        let once = img.rotate(Rotation::R90);
        assert_eq!(once.width(), 4);
        assert_eq!(once.height(), 6);
        let back = once.rotate(Rotation::R90).rotate(Rotation::R90).rotate(Rotation::R90);
        assert_eq!(back, img);
    }

    #[test]
    fn rotate_180_on_two_by_one_swaps_pixels() {
        let mut img = Image::filled(2, 1, [0, 0, 0]).unwrap();
        img.set_pixel(0, 0, [1, 2, 3]);
        img.set_pixel(1, 0, [4, 5, 6]);
        let r = img.rotate(Rotation::R180);
        assert_eq!(r.pixel(0, 0), [4, 5, 6]);
        assert_eq!(r.pixel(1, 0), [1, 2, 3]);
    }

    #[test]
    fn rotations_preserve_the_pixel_multiset() {
        let img = random_image(9, 6, 3);
        for rot in Rotation::ALL {
            assert_eq!(sorted_pixels(&img.rotate(rot)), sorted_pixels(&img));
        }
    }

    #[test]
    fn rejects_unsupported_angles() {
        assert!(Rotation::from_degrees(90).is_ok());
        for deg in [45, 270, 360] {
            assert!(matches!(
                Rotation::from_degrees(deg),
                Err(PreprocessError::UnsupportedRotation(d)) if d == deg
            ));
        }
    }

    #[test]
    fn crop_extracts_the_window() {
        let img = random_image(8, 8, 4);
        let c = img.crop(2, 3, 4, 2).unwrap();
        assert_eq!(c.width(), 4);
        assert_eq!(c.height(), 2);
        for y in 0..2 {
            for x in 0..4 {
                assert_eq!(c.pixel(x, y), img.pixel(x + 2, y + 3));
            }
        }
        assert!(img.crop(5, 0, 4, 4).is_err());
        assert!(img.crop(0, 7, 1, 2).is_err());
    }

    #[test]
    fn to_tensor_is_channel_planar_and_unit_scaled() {
        let mut img = Image::filled(2, 1, [0, 0, 0]).unwrap();
        img.set_pixel(0, 0, [255, 0, 51]);
        img.set_pixel(1, 0, [0, 255, 102]);
        let t: Tensor<f64> = img.to_tensor();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.at(&[0, 0, 0]), 1.0);
        assert_eq!(t.at(&[1, 0, 1]), 1.0);
        assert!((t.at(&[2, 0, 0]) - 0.2).abs() < 1e-12);
        assert!((t.at(&[2, 0, 1]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ppm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = random_image(11, 7, 5);
        img.save(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn png_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = random_image(11, 7, 6);
        img.save(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn load_sniffs_format_regardless_of_extension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mislabelled.png");
        let img = random_image(3, 3, 7);
        img.save_ppm(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn ppm_decoder_handles_comments_and_rejects_garbage() {
        let mut bytes = b"P6\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = Image::decode_ppm(&bytes).unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);

        assert!(Image::decode_ppm(b"P5\n2 1\n255\n").is_err());
        assert!(Image::decode_ppm(b"P6\n2 1\n255\n\x01\x02").is_err());
        assert!(Image::decode_ppm(b"P6\n2 1\n65535\n").is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = Image::load(Path::new("/nonexistent/img.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/img.png"));
    }
}
