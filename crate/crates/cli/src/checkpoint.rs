//! Binary checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "BRPSNN01"
//! u32 len, topology bytes (canonical, with the input shape)
//! u32 epochs completed
//! per learnable layer:   u32 ndims, u32 dims[ndims], f32 weights
//! per learnable layer:   u32 present (0 for the output layer), then if 1:
//!                        u32 ndims, u32 dims[ndims], f32 feedback entries
//! per learnable layer:   u64 adam step, f32 m[len], f32 v[len]
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use brpsnn::learn::{AdamState, FeedbackMatrices, FeedbackMatrix, Model};
use brpsnn::layers::Layer;
use brpsnn::topology::resolve;
use brpsnn::{LifParams, Network, Topology};

use crate::CliError;

const MAGIC: &[u8; 8] = b"BRPSNN01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub epochs: u32,
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    put_u32(out, dims.len() as u32);
    dims.iter().for_each(|&d| put_u32(out, d as u32));
    data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let net = &ck.model.net;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let topo = net.canonical_topology();
    put_u32(&mut out, topo.len() as u32);
    out.extend_from_slice(topo.as_bytes());
    put_u32(&mut out, ck.epochs);
    for li in net.learnable() {
        let l = &net.layers[li];
        put_tensor(&mut out, &l.spec.weight_dims(), &l.w);
    }
    for fb in &ck.model.feedback.layers {
        match fb {
            None => put_u32(&mut out, 0),
            Some(b) => {
                put_u32(&mut out, 1);
                put_tensor(&mut out, &[b.rows, b.cols], &b.data);
            }
        }
    }
    for st in &ck.model.optim {
        out.extend_from_slice(&st.step.to_le_bytes());
        for x in st.m.iter().chain(&st.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, String> {
        let bytes = self.take(n.checked_mul(4).ok_or("size overflow")?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn tensor(&mut self, expect: &[usize]) -> Result<Vec<f32>, String> {
        let nd = self.u32()? as usize;
        if nd > 8 {
            return Err(format!("tensor with {nd} dimensions"));
        }
        let dims: Vec<usize> = (0..nd).map(|_| self.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
        if dims != expect {
            return Err(format!("tensor shape {dims:?}, expected {expect:?}"));
        }
        self.f32s(dims.iter().product())
    }
}

/// Parses a checkpoint; the network takes its neuron constants from `lif`.
pub fn decode(bytes: &[u8], lif: LifParams) -> Result<Checkpoint, String> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..8] != MAGIC {
        return Err("bad magic, not a checkpoint".into());
    }
    let (body, footer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(footer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err("CRC mismatch, checkpoint is corrupt".into());
    }
    let mut r = Reader { bytes: body, at: 8 };
    let len = r.u32()? as usize;
    let topo = std::str::from_utf8(r.take(len)?).map_err(|_| "topology is not UTF-8")?;
    let mut topology = Topology::parse(topo).map_err(|e| e.to_string())?;
    let input = topology.input.take().ok_or("checkpoint topology lacks an input shape")?;
    let epochs = r.u32()?;
    let specs = resolve(&topology, input).map_err(|e| e.to_string())?;
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let w = if spec.is_learnable() {
            r.tensor(&spec.weight_dims())?
        } else {
            Vec::new()
        };
        layers.push(Layer::new(spec, w).map_err(|e| e.to_string())?);
    }
    let net = Network::from_layers(&topology, input, layers, lif).map_err(|e| e.to_string())?;
    let learnable = net.learnable();
    let classes = net.num_classes();
    let mut fb = Vec::with_capacity(learnable.len());
    for &li in &learnable {
        fb.push(match r.u32()? {
            0 => None,
            1 => {
                let rows = net.layers[li].spec.out_len();
                let data = r.tensor(&[rows, classes])?;
                Some(FeedbackMatrix::new(rows, classes, data).map_err(|e| e.to_string())?)
            }
            x => return Err(format!("bad feedback flag {x}")),
        });
    }
    let mut optim = Vec::with_capacity(learnable.len());
    for &li in &learnable {
        let n = net.layers[li].spec.weight_len();
        let step = r.u64()?;
        let m = r.f32s(n)?;
        let v = r.f32s(n)?;
        optim.push(AdamState { m, v, step });
    }
    if r.at != body.len() {
        return Err(format!("{} trailing bytes", body.len() - r.at));
    }
    Ok(Checkpoint {
        model: Model {
            net,
            feedback: FeedbackMatrices { layers: fb },
            optim,
        },
        epochs,
    })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, encode(ck)).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path, lif: LifParams) -> Result<Checkpoint, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes, lif).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
}
