//! CIFAR-10 binary batches: records of one label byte and 3×32×32 pixels.

use std::path::Path;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::topology::Shape;

const RECORD: usize = 1 + 3 * 32 * 32;

/// Appends the records of one batch file held in memory.
pub fn parse_cifar10(bytes: &[u8], path: &Path, samples: &mut Vec<Sample>, labels: &mut Vec<usize>) -> Result<()> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::format(
            path,
            format!("length {} is not a multiple of the {RECORD}-byte record", bytes.len()),
        ));
    }
    for rec in bytes.chunks_exact(RECORD) {
        if rec[0] >= 10 {
            return Err(Error::format(path, format!("label {} out of range", rec[0])));
        }
        labels.push(rec[0] as usize);
        samples.push(Sample::Analog(rec[1..].iter().map(|&p| p as f32 / 255.0).collect()));
    }
    Ok(())
}

pub fn read_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        parse_cifar10(&bytes, p, &mut samples, &mut labels)?;
    }
    Dataset::new(Shape::new(3, 32, 32), 10, samples, labels)
}
