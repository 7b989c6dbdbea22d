//! Plain-text event streams.
//!
//! ```text
//! classes=2 width=32 height=32 t_bins=100
//! label:1 duration:5000
//! 0 3 7 1
//! 12 4 7 0
//! label:0
//! ...
//! ```
//!
//! Each `label:` line opens a sample. Event lines are `t x y p` with integer
//! timestamps in `[0, duration)`, non-decreasing within a sample; `duration`
//! defaults to `t_bins`, so timestamps may be given directly as bin indices.
//! Polarity (`0`, `1`, `-1`) is accepted and merged. The window is cut into
//! `t_bins` equal bins and a bin is 1 if at least one event falls in it.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, Modality, Sample};
use crate::error::{Error, Result};
use crate::spikes::SpikeTrain;
use crate::topology::Shape;

struct Header {
    classes: usize,
    width: usize,
    height: usize,
    t_bins: usize,
}

fn parse_header(line: &str, path: &Path) -> Result<Header> {
    let (mut classes, mut width, mut height, mut t_bins) = (None, None, None, None);
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("header token '{tok}' is not key=value")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::format(path, format!("header value '{v}' is not an integer")))?;
        let slot = match k {
            "classes" => &mut classes,
            "width" => &mut width,
            "height" => &mut height,
            "t_bins" => &mut t_bins,
            _ => return Err(Error::format(path, format!("unknown header key '{k}'"))),
        };
        *slot = Some(v);
    }
    let need = |v: Option<usize>, k: &str| {
        v.filter(|&x| x > 0)
            .ok_or_else(|| Error::format(path, format!("header needs a positive '{k}'")))
    };
    Ok(Header {
        classes: need(classes, "classes")?,
        width: need(width, "width")?,
        height: need(height, "height")?,
        t_bins: need(t_bins, "t_bins")?,
    })
}

struct Open {
    label: usize,
    duration: u64,
    last_t: u64,
    train: SpikeTrain,
}

/// Parses a stream held in memory; `path` is only used in error messages.
pub fn parse_event_stream(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let h = parse_header(head, path)?;
    let shape = Shape::new(1, h.height, h.width);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut open: Option<Open> = None;
    let at = |n: usize, msg: String| Error::format(path, format!("line {n}: {msg}"));

    for (n, line) in lines {
        if let Some(rest) = line.strip_prefix("label:") {
            if let Some(o) = open.take() {
                samples.push(Sample::Events(o.train));
                labels.push(o.label);
            }
            let mut toks = rest.split_whitespace();
            let label: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| at(n, "bad label".into()))?;
            if label >= h.classes {
                return Err(at(n, format!("label {label} out of range for {} classes", h.classes)));
            }
            let mut duration = h.t_bins as u64;
            for tok in toks {
                let d = tok
                    .strip_prefix("duration:")
                    .and_then(|d| d.parse::<u64>().ok())
                    .filter(|&d| d > 0)
                    .ok_or_else(|| at(n, format!("unexpected token '{tok}'")))?;
                duration = d;
            }
            open = Some(Open {
                label,
                duration,
                last_t: 0,
                train: SpikeTrain::zeros(h.t_bins, &[shape.len()])?,
            });
            continue;
        }
        let o = open
            .as_mut()
            .ok_or_else(|| at(n, "event before the first label line".into()))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(at(n, format!("expected 't x y p', got '{line}'")));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| at(n, format!("'{s}' is not a non-negative integer")));
        let (t, x, y) = (num(f[0])?, num(f[1])? as usize, num(f[2])? as usize);
        if !matches!(f[3], "0" | "1" | "-1" | "+1") {
            return Err(at(n, format!("polarity '{}' is not 0, 1 or -1", f[3])));
        }
        if x >= h.width || y >= h.height {
            return Err(at(n, format!("coordinate ({x}, {y}) outside {}x{}", h.width, h.height)));
        }
        if t < o.last_t {
            return Err(at(n, format!("timestamp {t} goes back in time (previous {})", o.last_t)));
        }
        if t >= o.duration {
            return Err(at(n, format!("timestamp {t} beyond duration {}", o.duration)));
        }
        o.last_t = t;
        let bin = (t as u128 * h.t_bins as u128 / o.duration as u128) as usize;
        o.train.frame_mut(bin)[y * h.width + x] = 1;
    }
    if let Some(o) = open.take() {
        samples.push(Sample::Events(o.train));
        labels.push(o.label);
    }
    let mut ds = Dataset::new(shape, h.classes, samples, labels)?;
    ds.modality = Modality::Event;
    Ok(ds)
}

pub fn read_event_stream(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_event_stream(&text, path)
}

/// Serializes an event dataset with timestamps equal to bin indices.
pub fn render_event_stream(ds: &Dataset) -> Result<String> {
    if ds.shape.c != 1 {
        return Err(Error::contract(format!("event streams carry one channel, dataset has shape {}", ds.shape)));
    }
    let t_bins = match (ds.modality, ds.t_window()) {
        (Modality::Event, Some(t)) => t,
        (Modality::Event, None) => 1,
        _ => return Err(Error::contract("only event datasets can be written as event streams")),
    };
    let w = ds.shape.w;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "classes={} width={} height={} t_bins={}",
        ds.classes, w, ds.shape.h, t_bins
    );
    for (s, &label) in ds.samples.iter().zip(&ds.labels) {
        let Sample::Events(train) = s else {
            return Err(Error::contract("analog sample in an event dataset"));
        };
        let _ = writeln!(out, "label:{label}");
        for (t, frame) in train.frames().enumerate() {
            for (i, _) in frame.iter().enumerate().filter(|(_, &v)| v != 0) {
                let _ = writeln!(out, "{t} {} {} 1", i % w, i / w);
            }
        }
    }
    Ok(out)
}

pub fn write_event_stream(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_event_stream(ds)?).map_err(|e| Error::io(path, e))
}
