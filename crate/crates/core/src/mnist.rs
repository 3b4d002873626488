//! MNIST in IDX format.
//!
//! IDX files start with a 4-byte big-endian magic (`0x00000803` for images,
//! `0x00000801` for labels), followed by one big-endian u32 per dimension and
//! an unsigned-byte payload. Gzip-compressed files are detected by their
//! `1f 8b` signature and decompressed transparently.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Result, SkanError};
use crate::rng::SkanRng;
use crate::tensor::{Matrix, Real};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Raw image payload: `count` images of 28×28 bytes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub pixels: Vec<u8>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| SkanError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| SkanError::io(path, e))?;
        return Ok(out);
    }
    Ok(raw)
}

struct Header<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl Header<'_> {
    fn err(&self, field: &'static str, detail: impl Into<String>) -> SkanError {
        SkanError::Format {
            path: self.path.to_path_buf(),
            field,
            detail: detail.into(),
        }
    }

    fn u32_at(&self, offset: usize, field: &'static str) -> Result<u32> {
        let Some(b) = self.bytes.get(offset..offset + 4) else {
            return Err(self.err(
                field,
                format!(
                    "file truncated: {} bytes, need {} for this field",
                    self.bytes.len(),
                    offset + 4
                ),
            ));
        };
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn magic(&self, expected: u32) -> Result<()> {
        let magic = self.u32_at(0, "magic")?;
        if magic != expected {
            return Err(self.err(
                "magic",
                format!("expected 0x{expected:08x}, found 0x{magic:08x}"),
            ));
        }
        Ok(())
    }

    fn payload(&self, offset: usize, len: usize) -> Result<&[u8]> {
        let end = offset + len;
        match self.bytes.len() {
            n if n < end => Err(self.err(
                "payload",
                format!("file truncated: {n} bytes, header promises {end}"),
            )),
            n if n > end => {
                Err(self.err("payload", format!("{} trailing bytes after {end}", n - end)))
            }
            _ => Ok(&self.bytes[offset..end]),
        }
    }
}

/// Reads an IDX3 image file and checks the 28×28 geometry.
pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    parse_idx_images(path, &bytes)
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let h = Header { path, bytes };
    h.magic(IMAGES_MAGIC)?;
    let count = h.u32_at(4, "item count")? as usize;
    let rows = h.u32_at(8, "rows")? as usize;
    let cols = h.u32_at(12, "cols")? as usize;
    if rows != IMAGE_SIDE {
        return Err(h.err("rows", format!("expected {IMAGE_SIDE}, found {rows}")));
    }
    if cols != IMAGE_SIDE {
        return Err(h.err("cols", format!("expected {IMAGE_SIDE}, found {cols}")));
    }
    let pixels = h.payload(16, count * IMAGE_PIXELS)?.to_vec();
    Ok(IdxImages { count, pixels })
}

/// Reads an IDX1 label file; every label must be a digit.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    parse_idx_labels(path, &bytes)
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let h = Header { path, bytes };
    h.magic(LABELS_MAGIC)?;
    let count = h.u32_at(4, "item count")? as usize;
    let labels = h.payload(8, count)?;
    if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(h.err(
            "label",
            format!("value {} at index {i} is outside 0..=9", labels[i]),
        ));
    }
    Ok(labels.to_vec())
}

/// Labeled images, stored as raw bytes and scaled by 1/255 when batched.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(SkanError::Contract {
                op: "Dataset::new",
                detail: format!("{} images but {} labels", images.count, labels.len()),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(SkanError::Contract {
                op: "Dataset::new",
                detail: format!("label {} at index {i}", labels[i]),
            });
        }
        Ok(Self {
            pixels: images.pixels,
            labels,
        })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn raw_image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// First `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            pixels: self.pixels[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Normalized images for the given sample indices, one row each.
    pub fn gather<T: Real>(&self, indices: &[usize]) -> Matrix<T> {
        let scale = 1.0 / 255.0;
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        for &i in indices {
            data.extend(
                self.raw_image(i)
                    .iter()
                    .map(|&p| T::from_f64(p as f64 * scale)),
            );
        }
        Matrix::from_vec(indices.len(), IMAGE_PIXELS, data).expect("row length is fixed")
    }

    /// Whole dataset as an `n × 784` matrix in `[0, 1]`.
    pub fn images<T: Real>(&self) -> Matrix<T> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.gather(&all)
    }
}

/// One minibatch.
#[derive(Debug, Clone)]
pub struct Batch<T: Real = f64> {
    pub indices: Vec<usize>,
    pub images: Matrix<T>,
    pub labels: Vec<u8>,
}

/// Lazily materialized minibatches over a fixed sample order.
pub struct Batches<'a, T: Real> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch: usize,
    next: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> Iterator for Batches<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch).min(self.order.len());
        let indices = self.order[self.next..end].to_vec();
        self.next = end;
        Some(Batch {
            images: self.ds.gather(&indices),
            labels: indices.iter().map(|&i| self.ds.labels[i]).collect(),
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next).div_ceil(self.batch);
        (left, Some(left))
    }
}

impl<T: Real> ExactSizeIterator for Batches<'_, T> {}

/// One shuffled pass over `ds`; the final short batch is kept. Successive
/// calls with the same `rng` give successive epochs.
pub fn make_batches<'a, T: Real>(
    ds: &'a Dataset,
    batch: usize,
    rng: &mut SkanRng,
) -> Result<Batches<'a, T>> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut order);
    sequential(ds, batch, order)
}

/// Unshuffled batches, used for evaluation.
pub fn eval_batches<T: Real>(ds: &Dataset, batch: usize) -> Result<Batches<'_, T>> {
    sequential(ds, batch, (0..ds.len()).collect())
}

fn sequential<T: Real>(ds: &Dataset, batch: usize, order: Vec<usize>) -> Result<Batches<'_, T>> {
    if batch == 0 {
        return Err(SkanError::Config("batch size must be at least 1".into()));
    }
    Ok(Batches {
        ds,
        order,
        batch,
        next: 0,
        _marker: std::marker::PhantomData,
    })
}

/// Paths of one split inside a data directory. Plain files win over `.gz`.
fn split_paths(dir: &Path, images: &str, labels: &str) -> Result<(PathBuf, PathBuf)> {
    let find = |name: &str| -> Result<PathBuf> {
        let plain = dir.join(name);
        if plain.is_file() {
            return Ok(plain);
        }
        let gz = dir.join(format!("{name}.gz"));
        if gz.is_file() {
            return Ok(gz);
        }
        Err(SkanError::io(
            plain,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "MNIST file not found (also looked for .gz)",
            ),
        ))
    };
    Ok((find(images)?, find(labels)?))
}

/// Loads `(train, test)` from the four standard file names in `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let (ti, tl) = split_paths(dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let (vi, vl) = split_paths(dir, TEST_IMAGES, TEST_LABELS)?;
    Ok((Dataset::load(&ti, &tl)?, Dataset::load(&vi, &vl)?))
}

/// Serializes images in IDX3 layout; used to build fixtures.
pub fn encode_idx_images(count: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [
        IMAGES_MAGIC,
        count as u32,
        IMAGE_SIDE as u32,
        IMAGE_SIDE as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Serializes labels in IDX1 layout.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("fixture")
    }

    fn field_of(err: SkanError) -> &'static str {
        match err {
            SkanError::Format { field, .. } => field,
            other => panic!("expected format error, got {other}"),
        }
    }

    fn tiny(n: usize) -> Dataset {
        let pixels: Vec<u8> = (0..n * IMAGE_PIXELS).map(|i| (i % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::new(IdxImages { count: n, pixels }, labels).unwrap()
    }

    #[test]
    fn image_round_trip() {
        let pixels = vec![7u8; 2 * IMAGE_PIXELS];
        let bytes = encode_idx_images(2, &pixels);
        let imgs = parse_idx_images(p(), &bytes).unwrap();
        assert_eq!(imgs.count, 2);
        assert_eq!(imgs.pixels, pixels);
    }

    #[test]
    fn labels_magic_in_images_slot() {
        let mut bytes = encode_idx_images(1, &[0; IMAGE_PIXELS]);
        bytes[3] = 0x01;
        assert_eq!(
            field_of(parse_idx_images(p(), &bytes).unwrap_err()),
            "magic"
        );
    }

    #[test]
    fn wrong_geometry_names_field() {
        let mut bytes = encode_idx_images(1, &[0; IMAGE_PIXELS]);
        bytes[11] = 27;
        assert_eq!(field_of(parse_idx_images(p(), &bytes).unwrap_err()), "rows");
        let mut bytes = encode_idx_images(1, &[0; IMAGE_PIXELS]);
        bytes[15] = 29;
        assert_eq!(field_of(parse_idx_images(p(), &bytes).unwrap_err()), "cols");
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_idx_images(2, &[0; IMAGE_PIXELS]);
        assert_eq!(
            field_of(parse_idx_images(p(), &bytes).unwrap_err()),
            "payload"
        );
        let bytes = encode_idx_labels(&[1, 2, 3]);
        assert_eq!(
            field_of(parse_idx_labels(p(), &bytes[..bytes.len() - 1]).unwrap_err()),
            "payload"
        );
    }

    #[test]
    fn empty_label_file_is_truncated() {
        let err = parse_idx_labels(p(), &[]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
        assert_eq!(field_of(err), "magic");
    }

    #[test]
    fn out_of_range_label_reports_index() {
        let bytes = encode_idx_labels(&[3, 9, 10, 2]);
        let err = parse_idx_labels(p(), &bytes).unwrap_err();
        assert!(err.to_string().contains("index 2"), "{err}");
        assert_eq!(field_of(err), "label");
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
        enc.write_all(&encode_idx_labels(&[4, 5, 6])).unwrap();
        enc.finish().unwrap();
        assert_eq!(load_idx_labels(&path).unwrap(), vec![4, 5, 6]);
    }

    #[test]
    fn batch_counts_keep_short_tail() {
        let ds = tiny(10);
        let mut rng = SkanRng::for_shuffle(0);
        let sizes: Vec<usize> = make_batches::<f64>(&ds, 4, &mut rng)
            .unwrap()
            .map(|b| b.labels.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(make_batches::<f64>(&ds, 64, &mut rng).unwrap().len(), 1);
        assert!(make_batches::<f64>(&ds, 0, &mut rng).is_err());
    }

    #[test]
    fn epoch_visits_each_sample_once() {
        let ds = tiny(37);
        let mut rng = SkanRng::for_shuffle(5);
        let mut seen: Vec<usize> = make_batches::<f64>(&ds, 8, &mut rng)
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_order() {
        let ds = tiny(20);
        let order = |seed| -> Vec<usize> {
            let mut rng = SkanRng::for_shuffle(seed);
            make_batches::<f64>(&ds, 6, &mut rng)
                .unwrap()
                .flat_map(|b| b.indices)
                .collect()
        };
        assert_eq!(order(3), order(3));
        assert_ne!(order(3), order(4));
    }

    #[test]
    fn pixels_scaled_to_unit_interval() {
        let ds = tiny(3);
        let m = ds.images::<f64>();
        assert!(m.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(m[(0, 255)], 1.0);
        assert_eq!(m[(0, 0)], 0.0);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let imgs = IdxImages {
            count: 2,
            pixels: vec![0; 2 * IMAGE_PIXELS],
        };
        assert!(Dataset::new(imgs, vec![1]).is_err());
    }
}
