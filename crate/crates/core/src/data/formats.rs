//! MNIST IDX and CIFAR-10 binary containers. Pixels are scaled by 1/255.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CIFAR_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what} header")))
}

/// Parses IDX image (`0x803`, `[n, rows, cols]`) and label (`0x801`, `[n]`)
/// buffers. Examples have shape `[rows, cols]`; labels must be below 10.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "image")?;
    if magic != IDX_IMAGES {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let n = be_u32(images, 4, "image")? as usize;
    let rows = be_u32(images, 8, "image")? as usize;
    let cols = be_u32(images, 12, "image")? as usize;
    let magic = be_u32(labels, 0, "label")?;
    if magic != IDX_LABELS {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let nl = be_u32(labels, 4, "label")? as usize;
    if nl != n {
        return Err(Error::format(4, format!("{nl} labels for {n} images")));
    }
    let pixels = n * rows * cols;
    if images.len() != 16 + pixels {
        return Err(Error::format(
            images.len().min(16 + pixels) as u64,
            format!("image payload is {} bytes, header promises {pixels}", images.len().saturating_sub(16)),
        ));
    }
    if labels.len() != 8 + n {
        return Err(Error::format(
            labels.len().min(8 + n) as u64,
            format!("label payload is {} bytes, header promises {n}", labels.len().saturating_sub(8)),
        ));
    }
    let ys: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    if let Some(pos) = ys.iter().position(|&y| y >= CIFAR_CLASSES) {
        return Err(Error::format((8 + pos) as u64, format!("label {} is not a digit", ys[pos])));
    }
    let xs = images[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Dataset::new(vec![rows, cols], xs, ys, 10)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    parse_idx(&read_file(images)?, &read_file(labels)?)
}

/// `fs::read` with the path in the error message.
fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serializes `[rows, cols]` examples as `(images, labels)` IDX buffers.
pub fn write_idx(data: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let &[rows, cols] = data.example_shape() else {
        return Err(Error::shape("IDX images need [rows, cols] examples"));
    };
    let n = data.len() as u32;
    let mut images = Vec::with_capacity(16 + data.inputs().len());
    for v in [IDX_IMAGES, n, rows as u32, cols as u32] {
        images.extend(v.to_be_bytes());
    }
    images.extend(data.inputs().iter().map(|&v| to_byte(v)));
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend(IDX_LABELS.to_be_bytes());
    labels.extend(n.to_be_bytes());
    labels.extend(data.labels().iter().map(|&l| l as u8));
    Ok((images, labels))
}

/// Parses CIFAR-10 binary records (label byte + 3072 channel-major pixel
/// bytes) into `[3, 32, 32]` examples.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::format(
            (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
            format!("{} bytes is not a whole number of {CIFAR_RECORD}-byte records", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut xs = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut ys = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks(CIFAR_RECORD).enumerate() {
        if rec[0] as usize >= CIFAR_CLASSES {
            return Err(Error::format((i * CIFAR_RECORD) as u64, format!("label {} out of range", rec[0])));
        }
        ys.push(rec[0] as usize);
        xs.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Dataset::new(vec![3, 32, 32], xs, ys, CIFAR_CLASSES)
}

/// Concatenates the given batch files.
pub fn load_cifar10(paths: &[&Path]) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        let chunk = read_file(p)?;
        if chunk.len() % CIFAR_RECORD != 0 {
            return Err(Error::format(
                (chunk.len() - chunk.len() % CIFAR_RECORD) as u64,
                format!("{} is not a whole number of records", p.display()),
            ));
        }
        bytes.extend(chunk);
    }
    parse_cifar10(&bytes)
}

pub fn write_cifar10(data: &Dataset) -> Result<Vec<u8>> {
    if data.example_shape() != [3, 32, 32] || data.classes() > CIFAR_CLASSES {
        return Err(Error::shape("CIFAR-10 records need [3, 32, 32] examples and at most 10 classes"));
    }
    let per = data.example_len();
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for (i, &l) in data.labels().iter().enumerate() {
        out.push(l as u8);
        out.extend(data.inputs()[i * per..(i + 1) * per].iter().map(|&v| to_byte(v)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        images.extend((0..2 * 784).map(|i| (i % 256) as u8));
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        (images, labels)
    }

    #[test]
    fn idx_fixture() {
        let (im, lb) = fixture();
        let d = parse_idx(&im, &lb).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.example_shape(), [28, 28]);
        assert_eq!(d.labels(), [7, 3]);
        assert_eq!(d.inputs()[255], 1.0);
        assert_eq!(d.inputs()[1], 1.0 / 255.0);
        assert_eq!(write_idx(&d).unwrap(), (im, lb));
    }

    #[test]
    fn idx_errors() {
        let (im, lb) = fixture();
        let err = |r: Result<Dataset>| match r {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(err(parse_idx(&im[..im.len() - 1], &lb)), (im.len() - 1) as u64);
        assert_eq!(err(parse_idx(&im[..10], &lb)), 8);
        let mut short = lb.clone();
        short[7] = 1;
        short.pop();
        assert_eq!(err(parse_idx(&im, &short)), 4);
        let mut bad = im.clone();
        bad[3] = 1;
        assert_eq!(err(parse_idx(&bad, &lb)), 0);
        assert_eq!(err(parse_idx(&im, &im)), 0);
    }

    #[test]
    fn cifar_fixture() {
        let mut rec = vec![4u8];
        rec.extend((0..3072).map(|i| (i % 251) as u8));
        let d = parse_cifar10(&rec).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.example_shape(), [3, 32, 32]);
        assert_eq!(d.labels(), [4]);
        assert_eq!(d.inputs()[250], 250.0 / 255.0);
        assert_eq!(write_cifar10(&d).unwrap(), rec);
        assert!(matches!(parse_cifar10(&rec[..3000]), Err(Error::Format { offset: 0, .. })));
        rec[0] = 10;
        assert!(parse_cifar10(&rec).is_err());
    }
}
