//! Spike rasters of encoded inputs, for eyeballing the encoder.

use std::fmt::Write as _;
use std::path::Path;

use brpsnn::encode::{rate_encode, EncoderConfig};
use brpsnn::rng::{stream, Purpose};
use brpsnn::SpikeTrain;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// One line per step, `#` for a spike and `.` otherwise.
    Ascii,
    /// One line per step, comma-separated 0/1.
    Csv,
}

/// Grayscale intensities in `[0, 1]` from a PNG or PNM image.
pub fn read_gray(path: &Path) -> Result<Vec<f32>, CliError> {
    let img = image::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(img.to_luma8().into_raw().into_iter().map(|p| p as f32 / 255.0).collect())
}

/// Encodes `raw` with the stream `(seed, EvalEncoding, 0, index)`.
pub fn encode_raw(raw: &[f32], enc: &EncoderConfig, seed: u64, index: u64) -> Result<SpikeTrain, CliError> {
    let mut rng = stream(seed, Purpose::EvalEncoding, 0, index);
    rate_encode(raw, &[raw.len()], enc, &mut rng).map_err(|e| CliError::Data(e.to_string()))
}

/// `T` lines of `pixels` entries each.
pub fn render(train: &SpikeTrain, format: RasterFormat) -> String {
    let mut out = String::new();
    for frame in train.frames() {
        match format {
            RasterFormat::Ascii => {
                out.extend(frame.iter().map(|&s| if s == 1 { '#' } else { '.' }));
            }
            RasterFormat::Csv => {
                for (i, s) in frame.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{s}");
                }
            }
        }
        out.push('\n');
    }
    out
}
