//! IDX (MNIST) and CIFAR binary readers, plus the standard file layouts
//! inside a dataset directory.

use std::fs;
use std::path::Path;

use deepbool_core::{Example, LabeledDataset, RawImage};

use crate::error::{Error, Result};

const IDX_IMAGES: [u8; 4] = [0, 0, 8, 3];
const IDX_LABELS: [u8; 4] = [0, 0, 8, 1];

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(b: &[u8]) -> usize {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
}

fn check_magic(bytes: &[u8], magic: [u8; 4], header: usize, what: &'static str) -> Result<()> {
    if bytes.len() < 4 || bytes[..4] != magic {
        return Err(Error::format(what, format!("expected magic {magic:02x?}")));
    }
    if bytes.len() < header {
        return Err(Error::Truncated { what, expected: header, found: bytes.len() });
    }
    Ok(())
}

/// Images of an IDX `ubyte` image file as single-channel raw images.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    check_magic(bytes, IDX_IMAGES, 16, "IDX image file")?;
    let (n, h, w) = (be_u32(&bytes[4..]), be_u32(&bytes[8..]), be_u32(&bytes[12..]));
    let expected = 16 + n * h * w;
    if bytes.len() < expected {
        return Err(Error::Truncated { what: "IDX image file", expected, found: bytes.len() });
    }
    bytes[16..expected]
        .chunks_exact(h * w)
        .map(|px| RawImage::new(1, h, w, px.to_vec()).map_err(Error::from))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS, 8, "IDX label file")?;
    let n = be_u32(&bytes[4..]);
    if bytes.len() < 8 + n {
        return Err(Error::Truncated { what: "IDX label file", expected: 8 + n, found: bytes.len() });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Pairs an IDX image file with its label file.
pub fn load_idx(images: &Path, labels: &Path, class_count: u32) -> Result<LabeledDataset> {
    let imgs = parse_idx_images(&read(images)?)?;
    let labs = parse_idx_labels(&read(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(Error::Mismatch(format!(
            "{} has {} images but {} has {} labels",
            images.display(),
            imgs.len(),
            labels.display(),
            labs.len()
        )));
    }
    let examples = imgs.into_iter().zip(labs).map(|(i, l)| (Example::Raw(i), l as u32)).collect();
    Ok(LabeledDataset::new(examples, class_count)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarKind {
    Cifar10,
    /// Records carry a coarse and a fine label byte; `coarse` selects which.
    Cifar100 { coarse: bool },
}

impl CifarKind {
    pub fn record_len(self) -> usize {
        match self {
            CifarKind::Cifar10 => 3073,
            CifarKind::Cifar100 { .. } => 3074,
        }
    }

    pub fn class_count(self) -> u32 {
        match self {
            CifarKind::Cifar10 => 10,
            CifarKind::Cifar100 { coarse: true } => 20,
            CifarKind::Cifar100 { coarse: false } => 100,
        }
    }
}

pub fn parse_cifar(bytes: &[u8], kind: CifarKind) -> Result<LabeledDataset> {
    let rec = kind.record_len();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(Error::format(
            "CIFAR batch",
            format!("{} bytes is not a positive multiple of the {rec}-byte record", bytes.len()),
        ));
    }
    let examples = bytes
        .chunks_exact(rec)
        .map(|r| {
            let (label, pixels) = match kind {
                CifarKind::Cifar10 => (r[0], &r[1..]),
                CifarKind::Cifar100 { coarse } => (if coarse { r[0] } else { r[1] }, &r[2..]),
            };
            Ok((Example::Raw(RawImage::new(3, 32, 32, pixels.to_vec())?), label as u32))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(examples, kind.class_count())?)
}

pub fn load_cifar_binary(path: &Path, kind: CifarKind) -> Result<LabeledDataset> {
    parse_cifar(&read(path)?, kind)
}

/// Concatenates datasets with the same class count.
pub fn concat(parts: Vec<LabeledDataset>) -> Result<LabeledDataset> {
    let class_count = parts.first().map(|d| d.class_count).unwrap_or(0);
    let examples = parts.into_iter().flat_map(|d| d.examples).collect();
    Ok(LabeledDataset::new(examples, class_count)?)
}

/// MNIST train or test split from a directory holding the four standard IDX
/// files.
pub fn load_mnist_dir(dir: &Path, train: bool) -> Result<LabeledDataset> {
    let prefix = if train { "train" } else { "t10k" };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        10,
    )
}

/// CIFAR train or test split from an extracted `cifar-10-batches-bin` or
/// `cifar-100-binary` directory.
pub fn load_cifar_dir(dir: &Path, kind: CifarKind, train: bool) -> Result<LabeledDataset> {
    match (kind, train) {
        (CifarKind::Cifar10, true) => concat(
            (1..=5)
                .map(|i| load_cifar_binary(&dir.join(format!("data_batch_{i}.bin")), kind))
                .collect::<Result<_>>()?,
        ),
        (CifarKind::Cifar10, false) => load_cifar_binary(&dir.join("test_batch.bin"), kind),
        (CifarKind::Cifar100 { .. }, true) => load_cifar_binary(&dir.join("train.bin"), kind),
        (CifarKind::Cifar100 { .. }, false) => load_cifar_binary(&dir.join("test.bin"), kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, h: u32, w: u32, fill: u8) -> Vec<u8> {
        let mut b = IDX_IMAGES.to_vec();
        for v in [n, h, w] {
            b.extend(v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, (n * h * w) as usize));
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = IDX_LABELS.to_vec();
        b.extend((labels.len() as u32).to_be_bytes());
        b.extend(labels);
        b
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let imgs = parse_idx_images(&idx_images(3, 2, 4, 7)).unwrap();
        assert_eq!(imgs.len(), 3);
        assert_eq!((imgs[0].channels, imgs[0].height, imgs[0].width), (1, 2, 4));
        assert!(matches!(parse_idx_images(&[]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx_images(&idx_labels(&[1])), Err(Error::Format { .. })));
        let mut short = idx_images(3, 2, 4, 7);
        short.pop();
        assert!(matches!(parse_idx_images(&short), Err(Error::Truncated { .. })));
        assert!(matches!(parse_idx_images(&IDX_IMAGES[..]), Err(Error::Truncated { .. })));
        assert_eq!(parse_idx_labels(&idx_labels(&[3, 1])).unwrap(), [3, 1]);
    }

    #[test]
    fn idx_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&i, idx_images(10, 2, 2, 0)).unwrap();
        fs::write(&l, idx_labels(&[0; 9])).unwrap();
        assert!(matches!(load_idx(&i, &l, 10), Err(Error::Mismatch(_))));
        fs::write(&l, idx_labels(&[1; 10])).unwrap();
        assert_eq!(load_idx(&i, &l, 10).unwrap().len(), 10);
        fs::write(&i, b"").unwrap();
        assert!(matches!(load_idx(&i, &l, 10), Err(Error::Format { .. })));
    }

    #[test]
    fn cifar_records() {
        let mut ten = Vec::new();
        for label in 0..4u8 {
            ten.push(label);
            ten.extend(std::iter::repeat_n(label * 10, 3072));
        }
        let d = parse_cifar(&ten, CifarKind::Cifar10).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), [0, 1, 2, 3]);
        let Example::Raw(img) = &d.examples[2].0 else { panic!() };
        assert_eq!((img.channels, img.height, img.width, img.pixels[0]), (3, 32, 32, 20));
        ten.pop();
        assert!(matches!(parse_cifar(&ten, CifarKind::Cifar10), Err(Error::Format { .. })));

        let mut hundred = vec![4u8, 77];
        hundred.extend([0u8; 3072]);
        let fine = parse_cifar(&hundred, CifarKind::Cifar100 { coarse: false }).unwrap();
        assert_eq!(fine.examples[0].1, 77);
        let coarse = parse_cifar(&hundred, CifarKind::Cifar100 { coarse: true }).unwrap();
        assert_eq!(coarse.examples[0].1, 4);
        // 30,730,000 bytes is exactly 10,000 CIFAR-10 records.
        assert_eq!(30_730_000 % CifarKind::Cifar10.record_len(), 0);
        assert_eq!(30_730_000 / CifarKind::Cifar10.record_len(), 10_000);
    }
}
