//! MNIST in IDX format (optionally gzip-compressed).

use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;

use super::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{DpError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if path.as_os_str().is_empty() {
        return Err(DpError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "empty path"),
        ));
    }
    let raw = std::fs::read(path).map_err(|e| DpError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DpError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> DpError {
    DpError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    if bytes.len() >= 4 && BigEndian::read_u32(&bytes[0..4]) != magic {
        return Err(format_err(
            path,
            0,
            format!(
                "bad magic 0x{:08x}, expected 0x{magic:08x}",
                BigEndian::read_u32(&bytes[0..4])
            ),
        ));
    }
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(format_err(
            path,
            bytes.len(),
            format!(
                "truncated header: expected {need} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    Ok((0..dims)
        .map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect())
}

fn body<'a>(path: &Path, bytes: &'a [u8], start: usize, len: usize) -> Result<&'a [u8]> {
    let expected = start + len;
    if bytes.len() < expected {
        return Err(format_err(
            path,
            bytes.len(),
            format!(
                "truncated file: expected {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(
            path,
            expected,
            format!(
                "trailing data: expected {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    Ok(&bytes[start..])
}

/// Loads an IDX image file and its label file. Pixels are scaled to `[0, 1]`
/// and shaped `(N, 1, rows, cols)`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let dims = header(images_path, &img, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = body(images_path, &img, 16, n * rows * cols)?;

    let lab = read_file(labels_path)?;
    let count = header(labels_path, &lab, LABELS_MAGIC, 1)?[0];
    let labels = body(labels_path, &lab, 8, count)?;
    if count != n {
        return Err(DpError::Data(format!(
            "{} has {n} images but {} has {count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(format_err(
            labels_path,
            8 + i,
            format!("label {bad} out of range 0..=9"),
        ));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], data)?;
    Dataset::new(
        images,
        labels.iter().map(|&l| l as usize).collect(),
        10,
        split,
    )
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(DpError::io(
        dir.join(stem),
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "IDX file not found (also tried .gz)",
        ),
    ))
}

/// Loads the train (`train-*`) or test (`t10k-*`) files from an MNIST directory.
pub fn load_mnist_dir(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Test => "t10k",
        Split::Train | Split::Prune => "train",
    };
    let images = find(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels = find(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    load_mnist_idx(&images, &labels, split)
}

/// IDX image file bytes for `n` images of `rows × cols` bytes each.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = vec![0u8; 16];
    BigEndian::write_u32(&mut out[0..4], IMAGES_MAGIC);
    BigEndian::write_u32(&mut out[4..8], n as u32);
    BigEndian::write_u32(&mut out[8..12], rows as u32);
    BigEndian::write_u32(&mut out[12..16], cols as u32);
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; 8];
    BigEndian::write_u32(&mut out[0..4], LABELS_MAGIC);
    BigEndian::write_u32(&mut out[4..8], labels.len() as u32);
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn loads_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..3 * 4).map(|i| (i * 20) as u8).collect();
        let i = write(dir.path(), "img", &encode_idx_images(2, 2, &pixels));
        let l = write(dir.path(), "lab", &encode_idx_labels(&[3, 0, 9]));
        let ds = load_mnist_idx(&i, &l, Split::Train).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.sample_shape(), &[1, 2, 2]);
        assert_eq!(ds.labels(), &[3, 0, 9]);
        assert_eq!(ds.images().data()[5], 100.0 / 255.0);
        assert!(ds.images().data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn truncated_file_reports_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = encode_idx_images(2, 2, &[7u8; 8]);
        bytes.truncate(bytes.len() - 3);
        let i = write(dir.path(), "img", &bytes);
        let l = write(dir.path(), "lab", &encode_idx_labels(&[1, 2]));
        match load_mnist_idx(&i, &l, Split::Train) {
            Err(DpError::Format {
                offset, message, ..
            }) => {
                assert_eq!(offset, 21);
                assert!(message.contains("expected 24"), "{message}");
                assert!(message.contains("found 21"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "img", &encode_idx_labels(&[1]));
        let l = write(dir.path(), "lab", &encode_idx_labels(&[1]));
        assert!(matches!(
            load_mnist_idx(&i, &l, Split::Train),
            Err(DpError::Format { offset: 0, .. })
        ));
        assert!(matches!(
            load_mnist_idx(Path::new(""), &l, Split::Train),
            Err(DpError::Io { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "img", &encode_idx_images(1, 1, &[1, 2]));
        let l = write(dir.path(), "lab", &encode_idx_labels(&[1]));
        assert!(matches!(
            load_mnist_idx(&i, &l, Split::Train),
            Err(DpError::Data(_))
        ));
    }
}
