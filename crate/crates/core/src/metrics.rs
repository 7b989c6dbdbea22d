//! Operation counters, silent-neuron fractions and the per-epoch CSV log.
//!
//! Counting convention. Forward work is one unit per synaptic accumulation
//! (a presynaptic spike added into one postsynaptic current). Update work is
//! one unit per weight-gradient element written plus one per multiply of the
//! feedback projection; for the surrogate baseline it also includes the
//! transposed product that carries the error to the layer below and the
//! routing through pooling layers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::learn::tp::TpMode;
use crate::network::Network;
use crate::topology::LayerKind;

/// Exact work counters, one entry per learnable layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpCount {
    pub mode: TpMode,
    pub forward: Vec<u64>,
    pub update: Vec<u64>,
}

impl OpCount {
    pub fn new(mode: TpMode, k: usize) -> Self {
        Self {
            mode,
            forward: vec![0; k],
            update: vec![0; k],
        }
    }

    /// Number of learnable layers.
    pub fn k(&self) -> usize {
        self.forward.len()
    }

    pub fn forward_total(&self) -> u64 {
        self.forward.iter().sum()
    }

    pub fn update_total(&self) -> u64 {
        self.update.iter().sum()
    }

    pub fn add_forward(&mut self, per_layer: &[u64]) {
        for (a, b) in self.forward.iter_mut().zip(per_layer) {
            *a += b;
        }
    }

    pub fn add_update(&mut self, per_layer: &[u64], times: u64) {
        for (a, b) in self.update.iter_mut().zip(per_layer) {
            *a += b * times;
        }
    }
}

/// Update work of one sample, per learnable layer. `rows` is 1 for
/// per-window updates and `T` for per-step updates.
pub fn count_ops(mode: TpMode, net: &Network, rows: u64) -> Vec<u64> {
    let learnable = net.learnable();
    let classes = net.num_classes() as u64;
    let last = learnable.len().saturating_sub(1);
    learnable
        .iter()
        .enumerate()
        .map(|(pos, &li)| {
            let spec = &net.layers[li].spec;
            let m = spec.weight_len() as u64;
            let n_out = spec.out_len() as u64;
            let per_row = match mode {
                TpMode::PseudoBp => {
                    let mut ops = m;
                    if pos > 0 {
                        ops += m;
                        let below = learnable[pos - 1];
                        ops += net.layers[below + 1..li]
                            .iter()
                            .map(|l| l.spec.in_len() as u64)
                            .sum::<u64>();
                    }
                    ops
                }
                _ if pos == last => m + classes,
                _ => m + n_out * classes,
            };
            per_row * rows
        })
        .collect()
}

/// Fraction of neurons that emitted no spike over the window.
pub fn silent_fraction(spike_totals: &[u32]) -> f64 {
    if spike_totals.is_empty() {
        return 0.0;
    }
    spike_totals.iter().filter(|&&c| c == 0).count() as f64 / spike_totals.len() as f64
}

/// Running mean of per-sample silent fractions, per learnable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SilentTally {
    sums: Vec<f64>,
    samples: u64,
}

impl SilentTally {
    pub fn new(k: usize) -> Self {
        Self {
            sums: vec![0.0; k],
            samples: 0,
        }
    }

    /// Adds one sample given each layer's spike totals.
    pub fn add(&mut self, totals: &[Vec<u32>]) {
        for (s, t) in self.sums.iter_mut().zip(totals) {
            *s += silent_fraction(t);
        }
        self.samples += 1;
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.samples.max(1) as f64;
        self.sums.iter().map(|s| s / n).collect()
    }
}

/// Neuron-weighted silent fraction over the conv layers and over the hidden
/// fc layers (output excluded). `None` when the network has no such layer.
pub fn silent_by_kind(net: &Network, per_layer: &[f64]) -> (Option<f64>, Option<f64>) {
    let learnable = net.learnable();
    let last = learnable.len().saturating_sub(1);
    let (mut conv, mut fc) = ((0.0, 0usize), (0.0, 0usize));
    for (pos, (&li, &f)) in learnable.iter().zip(per_layer).enumerate() {
        let n = net.layers[li].spec.out_len();
        match net.layers[li].spec.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => {
                conv.0 += f * n as f64;
                conv.1 += n;
            }
            LayerKind::Fc if pos != last => {
                fc.0 += f * n as f64;
                fc.1 += n;
            }
            _ => {}
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    (mean(conv), mean(fc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
    pub silent_conv: Option<f64>,
    pub silent_fc: Option<f64>,
    pub fwd_ops: u64,
    pub upd_ops: u64,
    pub wall_ms: u64,
}

/// All rows of a run, in emission order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub records: Vec<EpochRecord>,
}

pub const CSV_HEADER: &str = "epoch,split,accuracy,loss,silent_conv,silent_fc,fwd_ops,upd_ops,wall_ms";

impl RunMetrics {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn last_test(&self) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.split == Split::Test)
    }

    /// CSV text with LF line endings. Missing silent fractions are empty fields.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{},{},{},{}",
                r.epoch,
                r.split.as_str(),
                r.accuracy,
                r.loss,
                opt(r.silent_conv),
                opt(r.silent_fc),
                r.fwd_ops,
                r.upd_ops,
                r.wall_ms
            );
        }
        out
    }
}

pub fn emit_csv(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, metrics.to_csv()).map_err(|e| Error::io(path, e))
}
