//! Datasets: MNIST IDX containers, seeded Gaussian blobs, and i.i.d. worker splits.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled samples with features scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    labels: Vec<usize>,
    class_count: usize,
    /// Image width used to place pixel patterns; `inputs.cols()` for non-image data.
    width: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        inputs: Matrix<T>,
        labels: Vec<usize>,
        class_count: usize,
        width: usize,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Shape(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        if width == 0 || !inputs.cols().is_multiple_of(width) {
            return Err(Error::Shape(format!(
                "width {width} does not divide {} features",
                inputs.cols()
            )));
        }
        let lo = T::zero();
        let hi = T::one();
        if inputs.as_slice().iter().any(|&v| !(v >= lo && v <= hi)) {
            return Err(Error::Domain("dataset features must lie in [0, 1]".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count,
            width,
        })
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.inputs.cols()
    }

    /// Copy of the listed samples.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            width: self.width,
        }
    }

    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Shape(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            offset: self.pos as u64,
            message: format!("{} file truncated inside header", self.what),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!(
                    "{} file truncated: header promises {len} data bytes, {available} present",
                    self.what
                ),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file; returns (count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "image",
    };
    let magic = r.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.body(count * rows * cols)?;
    Ok((count, rows, cols, pixels))
}

/// Parses an IDX label file; returns the label bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "label",
    };
    let magic = r.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = r.u32()? as usize;
    r.body(count)
}

/// Loads an IDX image/label pair, dividing pixel bytes by 255.
pub fn load_idx<T: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let image_bytes = read_file(images.as_ref())?;
    let label_bytes = read_file(labels.as_ref())?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let label_data = parse_idx_labels(&label_bytes)?;
    if label_data.len() != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("{count} images but {} labels", label_data.len()),
        });
    }
    let scale = T::of(255.0);
    let inputs: Vec<T> = pixels.iter().map(|&p| T::of(p as f64) / scale).collect();
    let labels: Vec<usize> = label_data.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(
        Matrix::from_vec(count, rows * cols, inputs)?,
        labels,
        class_count,
        cols.max(1),
    )
}

/// Encodes images (row-major bytes) as an IDX image file.
pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Sign of entry `j` of the `index`-th Walsh function: (-1)^popcount(j & index).
fn walsh_sign(index: usize, j: usize) -> f64 {
    if (j & index).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Center of class `c`: 0.5 ± 0.25 per coordinate following the (c+1)-th
/// Walsh function, so distinct classes differ in half of the coordinates of
/// any power-of-two dimension.
pub fn blob_center(c: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| 0.5 + 0.25 * walsh_sign(c + 1, j))
        .collect()
}

/// Gaussian blobs around fixed lattice points, clipped to [0, 1].
///
/// Samples are ordered class by class. `width` of the result is the
/// integer square root of `dim` when `dim` is a perfect square, else `dim`.
pub fn synth_blobs<T: Scalar>(
    class_count: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if class_count == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::Config(format!(
            "blob counts must be positive: classes={class_count}, dim={dim}, samples={samples_per_class}"
        )));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::Config(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = class_count * samples_per_class;
    let mut inputs = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for c in 0..class_count {
        let center = blob_center(c, dim);
        for _ in 0..samples_per_class {
            for &mu in &center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                inputs.push(T::of((mu + spread * noise).clamp(0.0, 1.0)));
            }
            labels.push(c);
        }
    }
    let side = (dim as f64).sqrt().round() as usize;
    let width = if side * side == dim { side } else { dim };
    Dataset::new(
        Matrix::from_vec(total, dim, inputs)?,
        labels,
        class_count,
        width,
    )
}

/// Partition of sample indices into `n` worker chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    chunks: Vec<Vec<usize>>,
}

impl DataSplit {
    pub fn chunks(&self) -> &[Vec<usize>] {
        &self.chunks
    }

    pub fn chunk(&self, worker: usize) -> &[usize] {
        &self.chunks[worker]
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Seeded global shuffle dealt round-robin to `n` workers.
pub fn split_iid(sample_count: usize, n: usize, seed: u64) -> Result<DataSplit> {
    if n == 0 || n > sample_count {
        return Err(Error::Config(format!(
            "cannot split {sample_count} samples across {n} workers"
        )));
    }
    let mut order: Vec<usize> = (0..sample_count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chunks = vec![Vec::with_capacity(sample_count / n + 1); n];
    for (pos, idx) in order.into_iter().enumerate() {
        chunks[pos % n].push(idx);
    }
    Ok(DataSplit { chunks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_header_is_format_error() {
        let bytes = [0u8, 0, 8, 3, 0, 0];
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn truncated_body_is_format_error() {
        let mut bytes = encode_idx_images(2, 2, 2, &[0; 8]);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let bytes = encode_idx_labels(&[1, 2]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let s = split_iid(10, 2, 1).unwrap();
        assert_eq!(s.chunk(0).len(), 5);
        assert_eq!(s.chunk(1).len(), 5);
        let s = split_iid(11, 2, 1).unwrap();
        assert_eq!(s.chunk(0).len(), 6);
        assert_eq!(s.chunk(1).len(), 5);
        assert!(matches!(split_iid(3, 4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_spread_blobs_sit_on_centers() {
        let d: Dataset<f64> = synth_blobs(4, 16, 3, 0.0, 9).unwrap();
        for (row, &l) in d.inputs().iter_rows().zip(d.labels()) {
            assert_eq!(row, blob_center(l, 16).as_slice());
        }
        assert_eq!(d.width(), 4);
    }

    #[test]
    fn class_centers_are_distinct() {
        for a in 0..8 {
            for b in 0..a {
                let ca = blob_center(a, 64);
                let cb = blob_center(b, 64);
                let differ = ca.iter().zip(&cb).filter(|(x, y)| x != y).count();
                assert_eq!(differ, 32);
            }
        }
    }

    #[test]
    fn dataset_validation() {
        let m = Matrix::from_rows(&[vec![0.5_f64, 1.5]]).unwrap();
        assert!(Dataset::new(m, vec![0], 1, 2).is_err());
        let m = Matrix::from_rows(&[vec![0.5_f64, 0.5]]).unwrap();
        assert!(Dataset::new(m.clone(), vec![3], 2, 2).is_err());
        assert!(Dataset::new(m, vec![0, 1], 2, 2).is_err());
    }
}
