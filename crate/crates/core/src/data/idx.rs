//! Big-endian IDX files (MNIST layout), uncompressed.

use std::path::Path;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::topology::Shape;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an image file and a label file already in memory. The paths are
/// only used in error messages.
pub fn parse_idx(images: &[u8], images_path: &Path, labels: &[u8], labels_path: &Path) -> Result<Dataset> {
    let magic = be_u32(images, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(images_path, format!("bad magic {magic:#010x}, expected 0x00000803")));
    }
    let n = be_u32(images, 4, images_path)? as usize;
    let h = be_u32(images, 8, images_path)? as usize;
    let w = be_u32(images, 12, images_path)? as usize;
    let px = h * w;
    let body = &images[16..];
    if body.len() != n * px {
        return Err(Error::format(
            images_path,
            format!("expected {} pixel bytes for {n} images of {h}x{w}, found {}", n * px, body.len()),
        ));
    }

    let magic = be_u32(labels, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(labels_path, format!("bad magic {magic:#010x}, expected 0x00000801")));
    }
    let m = be_u32(labels, 4, labels_path)? as usize;
    if m != n {
        return Err(Error::format(labels_path, format!("{m} labels for {n} images")));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != m {
        return Err(Error::format(labels_path, format!("expected {m} label bytes, found {}", label_bytes.len())));
    }
    if let Some(bad) = label_bytes.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::format(labels_path, format!("label {bad} out of range")));
    }

    let samples = body
        .chunks_exact(px.max(1))
        .take(n)
        .map(|img| Sample::Analog(img.iter().map(|&p| p as f32 / 255.0).collect()))
        .collect();
    Dataset::new(
        Shape::new(1, h, w),
        CLASSES,
        samples,
        label_bytes.iter().map(|&l| l as usize).collect(),
    )
}

pub fn read_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    parse_idx(&read(ip)?, ip, &read(lp)?, lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32, h: u32, w: u32, px: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IMAGES_MAGIC, n, h, w] {
            v.extend(x.to_be_bytes());
        }
        v.extend(px);
        v
    }

    fn labels(l: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(LABELS_MAGIC.to_be_bytes());
        v.extend((l.len() as u32).to_be_bytes());
        v.extend(l);
        v
    }

    fn parse(i: &[u8], l: &[u8]) -> Result<Dataset> {
        parse_idx(i, Path::new("img"), l, Path::new("lbl"))
    }

    #[test]
    fn parses_and_normalizes() {
        let ds = parse(&images(2, 1, 2, &[0, 255, 51, 102]), &labels(&[3, 9])).unwrap();
        assert_eq!(ds.shape, Shape::new(1, 1, 2));
        assert_eq!(ds.labels, vec![3, 9]);
        assert_eq!(ds.samples[0], Sample::Analog(vec![0.0, 1.0]));
        assert_eq!(ds.samples[1], Sample::Analog(vec![0.2, 0.4]));
    }

    #[test]
    fn rejects_malformed() {
        let mut bad = images(1, 1, 1, &[0]);
        bad[3] = 0x02;
        assert!(matches!(parse(&bad, &labels(&[0])), Err(Error::Format { .. })));
        assert!(matches!(parse(&images(2, 1, 1, &[0]), &labels(&[0, 1])), Err(Error::Format { .. })));
        assert!(matches!(parse(&images(1, 1, 1, &[0]), &labels(&[0, 1])), Err(Error::Format { .. })));
        assert!(matches!(parse(&images(1, 1, 1, &[0]), &labels(&[10])), Err(Error::Format { .. })));
        assert!(matches!(parse(&[0, 0], &labels(&[0])), Err(Error::Format { .. })));
        assert!(matches!(
            read_idx("/nonexistent/images", "/nonexistent/labels"),
            Err(Error::Io { .. })
        ));
    }
}
