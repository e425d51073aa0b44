//! Binary-classification datasets: MNIST IDX files, synthetic Gaussian
//! clusters, and disjoint per-node shards.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{substream, StreamTag};
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Mnist { class_pair: (u8, u8) },
    Synthetic { m: usize, d: usize, seed: u64, separation: f64 },
    Custom,
}

/// `m` labelled feature vectors; labels are 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&z| z != 0.0 && z != 1.0) {
            return Err(Error::InvalidInput(format!("labels must be 0 or 1, found {bad}")));
        }
        Ok(Dataset {
            features,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn subset(&self, rows: &[usize]) -> Shard {
        let d = self.dim();
        let features = DMatrix::from_fn(rows.len(), d, |r, c| self.features[(rows[r], c)]);
        let labels = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.labels[r]));
        Shard {
            features,
            labels,
            source_rows: rows.to_vec(),
        }
    }
}

/// One node's local data.
#[derive(Clone, Debug, PartialEq)]
pub struct Shard {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
    /// Row indices into the dataset this shard was cut from (empty if unknown).
    pub source_rows: Vec<usize>,
}

impl Shard {
    /// A shard with no recorded origin; it takes part in no overlap checks.
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Self {
        Shard {
            features,
            labels,
            source_rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Splits `n * per_node` uniformly chosen rows into `n` disjoint shards.
pub fn partition_dataset(dataset: &Dataset, n: usize, per_node: usize, seed: u64) -> Result<Vec<Shard>> {
    if n == 0 || per_node == 0 {
        return Err(Error::InvalidPartition(format!(
            "need n >= 1 and per_node >= 1 (got n={n}, per_node={per_node})"
        )));
    }
    let need = n
        .checked_mul(per_node)
        .ok_or_else(|| Error::InvalidPartition("n * per_node overflows".into()))?;
    if need > dataset.len() {
        return Err(Error::InvalidPartition(format!(
            "{n} nodes x {per_node} samples needs {need} rows, dataset has {}",
            dataset.len()
        )));
    }
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = substream(seed, StreamTag::Partition, &[]);
    rows.shuffle(&mut rng);
    Ok(rows[..need].chunks(per_node).map(|chunk| dataset.subset(chunk)).collect())
}

/// Two unit-variance Gaussian clusters centred at `±(separation/2)·u` for a
/// random unit vector `u`. Label 1 marks the `+u` cluster.
pub fn synth_dataset(m: usize, d: usize, seed: u64, separation: f64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("synthetic dataset needs m, d >= 1 (got m={m}, d={d})")));
    }
    let mut rng = substream(seed, StreamTag::Dataset, &[]);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    } else {
        u[0] = 1.0;
    }
    let half = separation / 2.0;
    let mut labels = Vec::with_capacity(m);
    let mut features = DMatrix::zeros(m, d);
    for r in 0..m {
        let z = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let sign = if z == 1.0 { 1.0 } else { -1.0 };
        for c in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            features[(r, c)] = sign * half * u[c] + g;
        }
        labels.push(z);
    }
    Dataset::new(
        features,
        labels,
        Provenance::Synthetic {
            m,
            d,
            seed,
            separation,
        },
    )
}

/// Raw contents of an IDX image file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("truncated header at byte {offset}")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("expected image magic {IDX_IMAGES_MAGIC}, found {magic}")));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "image payload has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("expected label magic {IDX_LABELS_MAGIC}, found {magic}")));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!("label payload has {} bytes, header says {count}", body.len())));
    }
    Ok(body.to_vec())
}

/// Keeps the two requested digits, scales pixels by 1/255 and maps
/// `class_pair.0 -> 0`, `class_pair.1 -> 1`.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8], class_pair: (u8, u8)) -> Result<Dataset> {
    if class_pair.0 == class_pair.1 {
        return Err(Error::InvalidInput(format!("class pair needs two distinct digits, got {class_pair:?}")));
    }
    let imgs = parse_idx_images(images)?;
    let labs = parse_idx_labels(labels)?;
    if imgs.count != labs.len() {
        return Err(Error::InconsistentPair {
            images: imgs.count,
            labels: labs.len(),
        });
    }
    let d = imgs.rows * imgs.cols;
    let keep: Vec<usize> = (0..imgs.count)
        .filter(|&i| labs[i] == class_pair.0 || labs[i] == class_pair.1)
        .collect();
    let features = DMatrix::from_fn(keep.len(), d, |r, c| imgs.pixels[keep[r] * d + c] as f64 / 255.0);
    let y = keep
        .iter()
        .map(|&i| if labs[i] == class_pair.0 { 0.0 } else { 1.0 })
        .collect();
    Dataset::new(features, y, Provenance::Mnist { class_pair })
}

pub fn ingest_mnist_idx(images_path: &Path, labels_path: &Path, class_pair: (u8, u8)) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    mnist_from_bytes(&images, &labels, class_pair)
}

/// Serializes images in IDX layout. Used to build fixtures.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols).max(1);
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

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        // 4 images of 2x2 pixels, labels 0 1 7 1
        let mut images = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2];
        images.extend_from_slice(&[0, 1, 2, 255, 255, 0, 0, 0, 9, 9, 9, 9, 10, 20, 30, 40]);
        let labels = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 4, 0, 1, 7, 1];
        (images, labels)
    }

    #[test]
    fn magic_is_big_endian() {
        assert_eq!(read_be_u32(&[0x00, 0x00, 0x08, 0x03], 0).unwrap(), 2051);
    }

    #[test]
    fn fixture_round_trip() {
        let (images, labels) = fixture();
        let ds = mnist_from_bytes(&images, &labels, (0, 1)).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels, vec![0.0, 1.0, 1.0]);
        assert_eq!(ds.features[(0, 1)], 1.0 / 255.0);
        assert_eq!(ds.features[(0, 3)], 1.0);
        assert_eq!(ds.features[(2, 2)], 30.0 / 255.0);
        assert!(ds.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(encode_idx_images(2, 2, &images[16..]), images);
        assert_eq!(encode_idx_labels(&labels[8..]), labels);
    }

    #[test]
    fn class_pair_order_sets_labels() {
        let (images, labels) = fixture();
        let ds = mnist_from_bytes(&images, &labels, (1, 0)).unwrap();
        assert_eq!(ds.labels, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_magic() {
        let (images, _) = fixture();
        let err = parse_idx_labels(&images).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn count_mismatch() {
        let (images, _) = fixture();
        let labels = encode_idx_labels(&[0, 1, 1]);
        assert!(matches!(
            mnist_from_bytes(&images, &labels, (0, 1)),
            Err(Error::InconsistentPair { images: 4, labels: 3 })
        ));
    }

    #[test]
    fn truncated_payload() {
        let (mut images, labels) = fixture();
        images.pop();
        assert!(matches!(mnist_from_bytes(&images, &labels, (0, 1)), Err(Error::Format(_))));
        assert!(matches!(parse_idx_images(&images[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn partition_exact_cover() {
        let ds = synth_dataset(100, 3, 1, 2.0).unwrap();
        let shards = partition_dataset(&ds, 10, 10, 5).unwrap();
        assert_eq!(shards.len(), 10);
        let mut all: Vec<usize> = shards.iter().flat_map(|s| s.source_rows.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        for s in &shards {
            assert_eq!(s.len(), 10);
            for (r, &src) in s.source_rows.iter().enumerate() {
                assert_eq!(s.labels[r], ds.labels[src]);
                assert_eq!(s.features.row(r), ds.features.row(src));
            }
        }
    }

    #[test]
    fn partition_errors() {
        let ds = synth_dataset(20, 2, 1, 2.0).unwrap();
        assert!(matches!(partition_dataset(&ds, 4, 0, 1), Err(Error::InvalidPartition(_))));
        assert!(matches!(partition_dataset(&ds, 3, 7, 1), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn partition_is_seeded() {
        let ds = synth_dataset(60, 2, 1, 2.0).unwrap();
        assert_eq!(partition_dataset(&ds, 3, 10, 4).unwrap(), partition_dataset(&ds, 3, 10, 4).unwrap());
        assert_ne!(partition_dataset(&ds, 3, 10, 4).unwrap(), partition_dataset(&ds, 3, 10, 5).unwrap());
    }

    #[test]
    fn synthetic_is_seeded() {
        assert_eq!(synth_dataset(50, 4, 3, 1.0).unwrap(), synth_dataset(50, 4, 3, 1.0).unwrap());
        assert!(synth_dataset(0, 4, 3, 1.0).is_err());
    }
}
