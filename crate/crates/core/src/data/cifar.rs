//! CIFAR-10 binary batches: records of one label byte plus 3072 pixel bytes
//! (1024 red, 1024 green, 1024 blue, each row-major 32×32).

use std::path::Path;

use super::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{DpError, Result};

pub const CIFAR10_RECORD_LEN: usize = 1 + 3 * 32 * 32;

pub fn load_cifar10_binary(path: &Path, split: Split) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| DpError::io(path, e))?;
    let rem = bytes.len() % CIFAR10_RECORD_LEN;
    if bytes.is_empty() || rem != 0 {
        return Err(DpError::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() - rem) as u64,
            message: format!(
                "{} bytes is not a whole number of {CIFAR10_RECORD_LEN}-byte records",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR10_RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * (CIFAR10_RECORD_LEN - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR10_RECORD_LEN).enumerate() {
        if rec[0] > 9 {
            return Err(DpError::Data(format!(
                "{}: record {i} (byte offset {}) has label {}",
                path.display(),
                i * CIFAR10_RECORD_LEN,
                rec[0]
            )));
        }
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
    }
    let images = Tensor::new(vec![n, 3, 32, 32], data)?;
    Dataset::new(images, labels, 10, split)
}

/// Serializes `(label, 3072 pixel bytes)` records in the CIFAR-10 layout.
pub fn encode_cifar10_records(records: &[(u8, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * CIFAR10_RECORD_LEN);
    for (label, pixels) in records {
        assert_eq!(
            pixels.len(),
            CIFAR10_RECORD_LEN - 1,
            "CIFAR record needs 3072 pixels"
        );
        out.push(*label);
        out.extend_from_slice(pixels);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize, seed: u64) -> Vec<(u8, Vec<u8>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (rng.gen_range(0..10), (0..3072).map(|_| rng.gen()).collect()))
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let recs = records(5, 1);
        let path = dir.path().join("data_batch_1.bin");
        std::fs::write(&path, encode_cifar10_records(&recs)).unwrap();
        let ds = load_cifar10_binary(&path, Split::Train).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.sample_shape(), &[3, 32, 32]);
        for (i, (label, pixels)) in recs.iter().enumerate() {
            assert_eq!(ds.labels()[i], *label as usize);
            let back: Vec<u8> = ds
                .images()
                .item(i)
                .iter()
                .map(|&v| (v * 255.0).round() as u8)
                .collect();
            assert_eq!(&back, pixels);
        }
    }

    #[test]
    fn full_batch_has_ten_thousand_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let bytes: Vec<u8> = (0..10_000 * CIFAR10_RECORD_LEN)
            .map(|i| {
                if i % CIFAR10_RECORD_LEN == 0 {
                    (i / CIFAR10_RECORD_LEN % 10) as u8
                } else {
                    128
                }
            })
            .collect();
        std::fs::write(&path, bytes).unwrap();
        assert_eq!(
            load_cifar10_binary(&path, Split::Train).unwrap().len(),
            10_000
        );
    }

    #[test]
    fn misaligned_and_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = encode_cifar10_records(&records(2, 2));
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_cifar10_binary(&path, Split::Train),
            Err(DpError::Format { offset, .. }) if offset == 2 * CIFAR10_RECORD_LEN as u64
        ));
        let mut recs = records(2, 3);
        recs[1].0 = 10;
        std::fs::write(&path, encode_cifar10_records(&recs)).unwrap();
        assert!(matches!(
            load_cifar10_binary(&path, Split::Train),
            Err(DpError::Data(_))
        ));
    }
}
