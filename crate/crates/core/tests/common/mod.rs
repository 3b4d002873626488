#![allow(dead_code)]

use std::path::{Path, PathBuf};

use skan::mnist::{encode_idx_images, encode_idx_labels, IdxImages, IMAGE_PIXELS, IMAGE_SIDE};
use skan::rng::SkanRng;
use skan::Dataset;

/// Balanced 784-pixel dataset: class `c` lights a horizontal band at rows
/// `2c+2 .. 2c+5`, plus a few random pixels.
pub fn synthetic_pixels(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = SkanRng::for_init(seed);
    let mut pixels = vec![0u8; n * IMAGE_PIXELS];
    let mut labels = Vec::with_capacity(n);
    for (s, img) in pixels.chunks_mut(IMAGE_PIXELS).enumerate() {
        let c = s % 10;
        labels.push(c as u8);
        for r in 2 + 2 * c..5 + 2 * c {
            for col in 4..24 {
                img[r * IMAGE_SIDE + col] = 150 + rng.below(100) as u8;
            }
        }
        for _ in 0..20 {
            img[rng.below(IMAGE_PIXELS)] = rng.below(256) as u8;
        }
    }
    (pixels, labels)
}

pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let (pixels, labels) = synthetic_pixels(n, seed);
    Dataset::new(IdxImages { count: n, pixels }, labels).unwrap()
}

/// Writes a synthetic train/test pair under the standard MNIST file names.
pub fn write_synthetic_mnist(dir: &Path, n_train: usize, n_test: usize) {
    for (n, seed, images, labels) in [
        (
            n_train,
            1,
            skan::mnist::TRAIN_IMAGES,
            skan::mnist::TRAIN_LABELS,
        ),
        (
            n_test,
            2,
            skan::mnist::TEST_IMAGES,
            skan::mnist::TEST_LABELS,
        ),
    ] {
        let (pixels, lab) = synthetic_pixels(n, seed);
        std::fs::write(dir.join(images), encode_idx_images(n, &pixels)).unwrap();
        std::fs::write(dir.join(labels), encode_idx_labels(&lab)).unwrap();
    }
}

/// `$SKAN_MNIST_DIR`, else `data/mnist` at the workspace root, if it holds
/// the training images.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SKAN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let present = [skan::mnist::TRAIN_IMAGES, skan::mnist::TEST_IMAGES]
        .iter()
        .all(|f| dir.join(f).is_file() || dir.join(format!("{f}.gz")).is_file());
    present.then_some(dir)
}

/// Central difference of `f` at `v`.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, v: f64, h: f64) -> f64 {
    (f(v + h) - f(v - h)) / (2.0 * h)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}
