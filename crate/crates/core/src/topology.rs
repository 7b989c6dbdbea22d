//! Topology strings such as `Cov5*5x28-FC1000-FC10`.
//!
//! ```text
//! topology := [input "-"] token ("-" token)*
//! input    := "In" C "x" H "x" W
//! token    := conv | pool | fc | echo
//! conv     := ("Cov" | "Conv") KH "*" KW "x" CHANNELS
//! pool     := "S" K                 K = 1 is a pass-through
//! fc       := "FC" N
//! echo     := N                     input-size echo, ignored
//! ```
//!
//! Convolutions are valid (no padding) with stride 1. `S<k>` is an OR-pool
//! with a `k × k` window and stride `k` (`1 × k` on single-row inputs).

use std::fmt;

use crate::error::{Error, Result};

/// Channel-major feature shape `[c, h, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn flat(n: usize) -> Self {
        Self { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerToken {
    Conv { kh: usize, kw: usize, channels: usize },
    Pool { k: usize },
    Fc { n: usize },
}

/// Parsed topology, independent of any weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub input: Option<Shape>,
    pub tokens: Vec<LayerToken>,
}

fn parse_usize(s: &str, what: &str, whole: &str) -> Result<usize> {
    s.parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Topology(format!("bad {what} '{s}' in '{whole}'")))
}

impl Topology {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut input = None;
        let mut tokens = Vec::new();
        for (i, tok) in s.split('-').enumerate() {
            let tok = tok.trim();
            if tok.is_empty() {
                return Err(Error::Topology(format!("empty token in '{s}'")));
            }
            if let Some(rest) = tok.strip_prefix("In") {
                if i != 0 {
                    return Err(Error::Topology(format!(
                        "input shape must come first in '{s}'"
                    )));
                }
                let parts: Vec<&str> = rest.split('x').collect();
                if parts.len() != 3 {
                    return Err(Error::Topology(format!("bad input shape '{tok}'")));
                }
                input = Some(Shape::new(
                    parse_usize(parts[0], "channels", s)?,
                    parse_usize(parts[1], "height", s)?,
                    parse_usize(parts[2], "width", s)?,
                ));
            } else if let Some(rest) = tok.strip_prefix("Conv").or_else(|| tok.strip_prefix("Cov")) {
                let (kernel, ch) = rest
                    .split_once('x')
                    .ok_or_else(|| Error::Topology(format!("bad conv token '{tok}'")))?;
                let (kh, kw) = kernel
                    .split_once('*')
                    .ok_or_else(|| Error::Topology(format!("bad conv kernel '{tok}'")))?;
                tokens.push(LayerToken::Conv {
                    kh: parse_usize(kh, "kernel height", s)?,
                    kw: parse_usize(kw, "kernel width", s)?,
                    channels: parse_usize(ch, "channel count", s)?,
                });
            } else if let Some(rest) = tok.strip_prefix("FC") {
                tokens.push(LayerToken::Fc {
                    n: parse_usize(rest, "fc width", s)?,
                });
            } else if let Some(rest) = tok.strip_prefix('S') {
                tokens.push(LayerToken::Pool {
                    k: parse_usize(rest, "pool size", s)?,
                });
            } else if tok.bytes().all(|b| b.is_ascii_digit()) {
                // input-size echo, e.g. the second 28 in "Cov5*5x28-28-FC1000"
            } else {
                return Err(Error::Topology(format!("unknown token '{tok}' in '{s}'")));
            }
        }
        if tokens.is_empty() {
            return Err(Error::Topology(format!("'{s}' has no layers")));
        }
        Ok(Self { input, tokens })
    }

    /// Canonical string with an explicit input shape.
    pub fn canonical(&self, input: Shape) -> String {
        let mut parts = vec![format!("In{}x{}x{}", input.c, input.h, input.w)];
        for t in &self.tokens {
            parts.push(match *t {
                LayerToken::Conv { kh, kw, channels } => format!("Cov{kh}*{kw}x{channels}"),
                LayerToken::Pool { k } => format!("S{k}"),
                LayerToken::Fc { n } => format!("FC{n}"),
            });
        }
        parts.join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    Conv1d,
    Pool,
    Fc,
}

/// Geometry of one layer, fully resolved against its input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// Output channels (conv), output width (fc), input channels (pool).
    pub channels: usize,
}

impl LayerSpec {
    pub fn has_neurons(&self) -> bool {
        !matches!(self.kind, LayerKind::Pool)
    }

    pub fn is_learnable(&self) -> bool {
        self.has_neurons()
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.len()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.len()
    }

    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => {
                self.channels * self.in_shape.c * self.kernel.0 * self.kernel.1
            }
            LayerKind::Fc => self.in_len() * self.out_len(),
            LayerKind::Pool => 0,
        }
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => {
                vec![self.channels, self.in_shape.c, self.kernel.0, self.kernel.1]
            }
            LayerKind::Fc => vec![self.in_len(), self.out_len()],
            LayerKind::Pool => vec![],
        }
    }

    pub fn conv(in_shape: Shape, kh: usize, kw: usize, channels: usize) -> Result<Self> {
        if kh > in_shape.h || kw > in_shape.w {
            return Err(Error::Topology(format!(
                "kernel {kh}x{kw} larger than input {in_shape}"
            )));
        }
        let kind = if in_shape.h == 1 && kh == 1 {
            LayerKind::Conv1d
        } else {
            LayerKind::Conv2d
        };
        Ok(Self {
            kind,
            in_shape,
            out_shape: Shape::new(channels, in_shape.h - kh + 1, in_shape.w - kw + 1),
            kernel: (kh, kw),
            stride: (1, 1),
            channels,
        })
    }

    pub fn pool(in_shape: Shape, k: usize) -> Result<Self> {
        let kh = if in_shape.h == 1 { 1 } else { k };
        if in_shape.h % kh != 0 || in_shape.w % k != 0 {
            return Err(Error::Topology(format!(
                "pool window {kh}x{k} does not tile input {in_shape}"
            )));
        }
        Ok(Self {
            kind: LayerKind::Pool,
            in_shape,
            out_shape: Shape::new(in_shape.c, in_shape.h / kh, in_shape.w / k),
            kernel: (kh, k),
            stride: (kh, k),
            channels: in_shape.c,
        })
    }

    pub fn fc(n_in: usize, n_out: usize) -> Self {
        Self {
            kind: LayerKind::Fc,
            in_shape: Shape::flat(n_in),
            out_shape: Shape::flat(n_out),
            kernel: (1, 1),
            stride: (1, 1),
            channels: n_out,
        }
    }
}

/// Resolves every layer's shapes against `input`.
pub fn resolve(topology: &Topology, input: Shape) -> Result<Vec<LayerSpec>> {
    if let Some(declared) = topology.input {
        if declared != input {
            return Err(Error::Topology(format!(
                "topology declares input {declared}, data has {input}"
            )));
        }
    }
    let mut specs = Vec::with_capacity(topology.tokens.len());
    let mut shape = input;
    let mut seen_fc = false;
    for token in &topology.tokens {
        let spec = match *token {
            LayerToken::Conv { kh, kw, channels } => {
                if seen_fc {
                    return Err(Error::Topology("convolution after a fully-connected layer".into()));
                }
                LayerSpec::conv(shape, kh, kw, channels)?
            }
            LayerToken::Pool { k } => {
                if seen_fc {
                    return Err(Error::Topology("pooling after a fully-connected layer".into()));
                }
                LayerSpec::pool(shape, k)?
            }
            LayerToken::Fc { n } => {
                seen_fc = true;
                LayerSpec::fc(shape.len(), n)
            }
        };
        shape = spec.out_shape;
        specs.push(spec);
    }
    match specs.last() {
        Some(last) if last.kind == LayerKind::Fc => Ok(specs),
        _ => Err(Error::Topology("the last layer must be fully connected".into())),
    }
}
