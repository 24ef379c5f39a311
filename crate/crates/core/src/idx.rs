//! Reader for the big-endian IDX format used by the MNIST family of datasets.
//!
//! Layout: a 4-byte magic (`0x00000803` for `u8` images, `0x00000801` for
//! `u8` labels), one big-endian `u32` per dimension, then the raw bytes.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format { offset: offset as u64, msg: "truncated header".into() })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic 0x{magic:08X}, expected 0x{expected:08X}"),
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Format {
            offset: (16 + body.len()) as u64,
            msg: format!("truncated image data: header promises {need} bytes, found {}", body.len()),
        });
    }
    Ok(IdxImages { count, rows, cols, pixels: body[..need].to_vec() })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format {
            offset: (8 + body.len()) as u64,
            msg: format!("truncated label data: header promises {count} labels, found {}", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

/// Global pixel mean/std computed on the training images after scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(images: &IdxImages) -> Self {
        let n = images.pixels.len().max(1) as f64;
        let mean = images.pixels.iter().map(|&p| p as f64 / 255.0).sum::<f64>() / n;
        let var = images.pixels.iter().map(|&p| (p as f64 / 255.0 - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt().max(1e-12) }
    }

    pub fn apply(&self, pixel: u8) -> f64 {
        (pixel as f64 / 255.0 - self.mean) / self.std
    }
}

/// Pairs images and labels into examples, z-scoring with `stats`.
pub fn to_examples(images: &IdxImages, labels: &[u8], stats: &Standardizer) -> Result<Vec<Example>> {
    if images.count != labels.len() {
        return Err(Error::Format {
            offset: 4,
            msg: format!("count mismatch: {} images vs {} labels", images.count, labels.len()),
        });
    }
    let d = images.rows * images.cols;
    Ok(images
        .pixels
        .chunks_exact(d.max(1))
        .zip(labels)
        .map(|(px, &y)| Example { x: px.iter().map(|&p| stats.apply(p)).collect(), y: y as usize })
        .collect())
}

pub fn read_images(path: &Path) -> Result<IdxImages> {
    parse_images(&fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(&fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

/// Loads a training file pair: pixels scaled by 1/255, then z-scored with the
/// file's own mean and std. Returns the statistics for reuse on test files.
pub fn load_idx_with_stats(images_path: &Path, labels_path: &Path) -> Result<(Dataset, Standardizer)> {
    let images = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    let stats = Standardizer::fit(&images);
    let examples = to_examples(&images, &labels, &stats)?;
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0).max(10);
    Ok((Dataset::new(examples, Vec::new(), classes)?, stats))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    load_idx_with_stats(images_path, labels_path).map(|(d, _)| d)
}

/// Serializes images in IDX form; used to build fixtures.
pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 784).map(|i| (i % 256) as u8).collect();
        let img = IdxImages { count: 2, rows: 28, cols: 28, pixels };
        (encode_images(&img), encode_labels(&[3, 7]))
    }

    #[test]
    fn two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        let (d, stats) = load_idx_with_stats(&ip, &lp).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.dim(), 784);
        assert_eq!(d.examples[1].y, 7);
        // z-scored with its own statistics
        let all: Vec<f64> = d.examples.iter().flat_map(|e| e.x.iter().copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        assert!(stats.mean > 0.0 && stats.mean < 1.0);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = fixture().0;
        bytes[..4].copy_from_slice(&0xDEAD_BEEFu32.to_be_bytes());
        let err = parse_images(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
        assert!(parse_labels(&fixture().0).is_err());
    }

    #[test]
    fn truncated_and_mismatched() {
        let (img, lab) = fixture();
        let err = parse_images(&img[..100]).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 100, .. }), "{err}");
        assert!(matches!(parse_images(&img[..10]), Err(Error::Format { offset: 8, .. })));
        let images = parse_images(&img).unwrap();
        let labels = parse_labels(&lab).unwrap();
        let stats = Standardizer::fit(&images);
        assert!(to_examples(&images, &labels[..1], &stats).is_err());
    }
}
