//! Fixed random projections from class space into each hidden layer.

use std::str::FromStr;

use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::network::Network;
use crate::rng::{stream, Purpose};

/// Magnitude rule for feedback entries, which are drawn from
/// `Uniform(-1, 1)` and multiplied by the rule's factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackScale {
    /// `1 / sqrt(hidden layer size)`.
    LayerSize,
    /// `1 / sqrt(number of classes)`.
    Classes,
    /// No scaling.
    #[default]
    Unit,
}

impl FeedbackScale {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackScale::LayerSize => "layer_size",
            FeedbackScale::Classes => "classes",
            FeedbackScale::Unit => "unit",
        }
    }

    fn factor(self, layer_size: usize, classes: usize) -> f32 {
        match self {
            FeedbackScale::LayerSize => 1.0 / (layer_size as f32).sqrt(),
            FeedbackScale::Classes => 1.0 / (classes as f32).sqrt(),
            FeedbackScale::Unit => 1.0,
        }
    }
}

impl FromStr for FeedbackScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "layer_size" => Ok(FeedbackScale::LayerSize),
            "classes" => Ok(FeedbackScale::Classes),
            "unit" => Ok(FeedbackScale::Unit),
            other => Err(Error::Contract(format!("unknown feedback scale '{other}'"))),
        }
    }
}

/// Matrix of shape `[layer neurons × classes]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FeedbackMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(data.len() == rows * cols, "feedback data has {} entries for {rows}x{cols}", data.len());
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }
}

/// One matrix per learnable layer. The output layer's entry is `None`: its
/// target is the class signal itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrices {
    pub layers: Vec<Option<FeedbackMatrix>>,
}

impl FeedbackMatrices {
    /// Order-sensitive FNV-1a digest of every entry's bit pattern.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for m in &self.layers {
            match m {
                None => eat(u64::MAX),
                Some(m) => {
                    eat(m.rows as u64);
                    eat(m.cols as u64);
                    m.data.iter().for_each(|x| eat(x.to_bits() as u64));
                }
            }
        }
        h
    }
}

/// Draws every hidden layer's matrix from the run seed.
pub fn init_feedback(net: &Network, seed: u64, scale: FeedbackScale) -> FeedbackMatrices {
    let classes = net.num_classes();
    let learnable = net.learnable();
    let last = learnable.len().saturating_sub(1);
    let layers = learnable
        .iter()
        .enumerate()
        .map(|(pos, &li)| {
            if pos == last {
                return None;
            }
            let rows = net.layers[li].spec.out_len();
            let factor = scale.factor(rows, classes);
            let mut rng = stream(seed, Purpose::Feedback, 0, li as u64);
            let data = (0..rows * classes)
                .map(|_| rng.gen_range(-1.0f32..1.0) * factor)
                .collect();
            Some(FeedbackMatrix {
                rows,
                cols: classes,
                data,
            })
        })
        .collect();
    FeedbackMatrices { layers }
}

/// `b · tp`, or `tp` itself when `b` is the implicit identity.
pub fn project_target(b: Option<&FeedbackMatrix>, tp: &[f32]) -> Result<Vec<f32>> {
    match b {
        None => Ok(tp.to_vec()),
        Some(b) => {
            ensure!(
                tp.len() == b.cols,
                "signal has {} classes, feedback matrix expects {}",
                tp.len(),
                b.cols
            );
            Ok(b
                .data
                .chunks_exact(b.cols)
                .map(|row| row.iter().zip(tp).map(|(x, y)| x * y).sum())
                .collect())
        }
    }
}
