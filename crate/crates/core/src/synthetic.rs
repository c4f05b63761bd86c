//! Synthetic four-class grayscale corpus of bright shapes on a noisy dark
//! background, laid out like a real class-folder corpus.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{epoch_seed, DatasetError, Split};
use crate::pseudocolor::GrayscaleImage;

/// Folder names, in label order.
pub const TOY_CLASSES: [&str; 4] = ["bar", "large_disk", "no_shape", "small_disk"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Bar,
    LargeDisk,
    Empty,
    SmallDisk,
}

impl Shape {
    pub fn from_label(label: usize) -> Option<Self> {
        [Self::Bar, Self::LargeDisk, Self::Empty, Self::SmallDisk].get(label).copied()
    }
}

/// One `size×size` image of `shape`. Deterministic in `seed`.
pub fn blob_image(shape: Shape, size: usize, seed: u64) -> GrayscaleImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let noise = Normal::new(0.0, 8.0).expect("valid normal");
    let background: f64 = rng.random_range(20.0..50.0);
    let level: f64 = rng.random_range(170.0..235.0);
    let inside: Box<dyn Fn(f64, f64) -> bool> = match shape {
        Shape::Empty => Box::new(|_, _| false),
        Shape::LargeDisk | Shape::SmallDisk => {
            let r = if shape == Shape::LargeDisk {
                rng.random_range(0.20..0.27) * s
            } else {
                rng.random_range(0.06..0.10) * s
            };
            let cx = rng.random_range(r + 1.0..s - r - 1.0);
            let cy = rng.random_range(r + 1.0..s - r - 1.0);
            Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
        }
        Shape::Bar => {
            let half_len = rng.random_range(0.22..0.32) * s;
            let half_thick = rng.random_range(0.035..0.055) * s;
            let cx = rng.random_range(half_len + 1.0..s - half_len - 1.0);
            let cy = rng.random_range(half_thick + 1.0..s - half_thick - 1.0);
            Box::new(move |x, y| (x - cx).abs() <= half_len && (y - cy).abs() <= half_thick)
        }
    };
    let pixels = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            let base = if inside(x, y) { level } else { background };
            (base + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayscaleImage::new(size, size, pixels).expect("pixel count matches")
}

/// Writes `root/{train,test}/<class>/NNNN.png` with `per_class` images per
/// class and split.
pub fn write_toy_corpus(
    root: &Path,
    train_per_class: usize,
    test_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<(), DatasetError> {
    for (split, count, salt) in [(Split::Train, train_per_class, 0u64), (Split::Test, test_per_class, 1u64)] {
        for (label, class) in TOY_CLASSES.iter().enumerate() {
            let dir = root.join(split.dir_name()).join(class);
            std::fs::create_dir_all(&dir).map_err(|source| DatasetError::Io { path: dir.display().to_string(), source })?;
            let shape = Shape::from_label(label).expect("label in range");
            for i in 0..count {
                let image_seed = epoch_seed(seed ^ (salt << 32) ^ ((label as u64) << 40), i);
                let img = blob_image(shape, size, image_seed);
                let path = dir.join(format!("{i:04}.png"));
                image::GrayImage::from_raw(size as u32, size as u32, img.pixels().to_vec())
                    .expect("buffer matches dimensions")
                    .save(&path)
                    .map_err(|e| DatasetError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
            }
        }
    }
    Ok(())
}
