//! Seeded random patch extraction.
//!
//! Origins are drawn uniformly over all valid positions, independently and
//! with replacement — overlapping patches are expected and allowed.

use crate::preprocess::image::Image;
use crate::preprocess::PreprocessError;
use crate::tensor::SeedRng;

/// Cut `count` square patches of `size` pixels from `image`. Returns each
/// patch with its `(origin_x, origin_y)`.
pub fn extract_random_patches(
    image: &Image,
    count: usize,
    size: usize,
    rng: &mut SeedRng,
) -> Result<Vec<(Image, (usize, usize))>, PreprocessError> {
    if size == 0 {
        return Err(PreprocessError::BadPatchSize(0));
    }
    if image.width() < size || image.height() < size {
        return Err(PreprocessError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            size,
        });
    }
    let max_x = image.width() - size;
    let max_y = image.height() - size;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.next_index(max_x + 1);
        let y = rng.next_index(max_y + 1);
        out.push((image.crop(x, y, size, size)?, (x, y)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> Image {
        let mut img = Image::filled(w, h, [0, 0, 0]).unwrap();
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [x as u8, y as u8, 7]);
            }
        }
        img
    }

    #[test]
    fn exact_fit_pins_every_origin_at_zero() {
        let img = gradient_image(16, 16);
        let mut rng = SeedRng::new(1);
        let patches = extract_random_patches(&img, 5, 16, &mut rng).unwrap();
        assert_eq!(patches.len(), 5);
        for (patch, origin) in &patches {
            assert_eq!(*origin, (0, 0));
            assert_eq!(patch, &img);
        }
    }

    #[test]
    fn origins_stay_in_bounds_and_patches_match_the_source() {
        let img = gradient_image(40, 25);
        let mut rng = SeedRng::new(2);
        let patches = extract_random_patches(&img, 200, 8, &mut rng).unwrap();
        assert_eq!(patches.len(), 200);
        for (patch, (x, y)) in &patches {
            assert!(*x <= 32 && *y <= 17);
            assert_eq!(patch.pixel(0, 0), [*x as u8, *y as u8, 7]);
            assert_eq!(patch.pixel(7, 7), [(x + 7) as u8, (y + 7) as u8, 7]);
        }
    }

    #[test]
    fn same_seed_gives_identical_origin_lists() {
        let img = gradient_image(30, 30);
        let run = |seed| -> Vec<(usize, usize)> {
            let mut rng = SeedRng::new(seed);
            extract_random_patches(&img, 50, 9, &mut rng)
                .unwrap()
                .into_iter()
                .map(|(_, o)| o)
                .collect()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn rejects_undersized_images() {
        let img = gradient_image(10, 30);
        let mut rng = SeedRng::new(5);
        assert!(matches!(
            extract_random_patches(&img, 1, 16, &mut rng),
            Err(PreprocessError::ImageTooSmall { width: 10, height: 30, size: 16 })
        ));
    }
}
