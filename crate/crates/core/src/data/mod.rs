//! Datasets, readers and deterministic batching.

mod cifar;
mod events;
mod idx;
mod synth;

pub use cifar::{parse_cifar10, read_cifar10_bin};
pub use events::{parse_event_stream, read_event_stream, render_event_stream, write_event_stream};
pub use idx::{parse_idx, read_idx};
pub use synth::{synth_temporal, SynthKind, SynthSpec};

use rand::seq::SliceRandom;

use crate::encode::{rate_encode, EncoderConfig};
use crate::error::{ensure, Result};
use crate::rng::{stream, Purpose};
use crate::spikes::SpikeTrain;
use crate::topology::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// Intensities in `[0, 1]` that are rate-encoded on the fly.
    Analog,
    /// Samples that already are spike trains.
    Event,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Analog(Vec<f32>),
    Events(SpikeTrain),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: Shape,
    pub classes: usize,
    pub modality: Modality,
    pub samples: Vec<Sample>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Checks shapes, labels and value ranges of every sample.
    pub fn new(shape: Shape, classes: usize, samples: Vec<Sample>, labels: Vec<usize>) -> Result<Self> {
        ensure!(classes >= 1, "dataset needs at least one class");
        ensure!(
            samples.len() == labels.len(),
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        );
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(crate::Error::contract(format!("label {l} out of range for {classes} classes")));
        }
        let modality = match samples.first() {
            Some(Sample::Events(_)) => Modality::Event,
            _ => Modality::Analog,
        };
        let mut t_window = None;
        for s in &samples {
            match (s, modality) {
                (Sample::Analog(x), Modality::Analog) => {
                    ensure!(x.len() == shape.len(), "sample has {} values, shape {shape}", x.len());
                    ensure!(
                        x.iter().all(|v| (0.0..=1.0).contains(v)),
                        "analog sample outside [0, 1]"
                    );
                }
                (Sample::Events(x), Modality::Event) => {
                    ensure!(x.frame_len() == shape.len(), "event frames have {} entries, shape {shape}", x.frame_len());
                    ensure!(
                        *t_window.get_or_insert(x.t_window()) == x.t_window(),
                        "event samples differ in window length"
                    );
                }
                _ => return Err(crate::Error::contract("dataset mixes analog and event samples")),
            }
        }
        Ok(Self {
            shape,
            classes,
            modality,
            samples,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Window length of event samples, `None` for analog data.
    pub fn t_window(&self) -> Option<usize> {
        match self.samples.first() {
            Some(Sample::Events(x)) => Some(x.t_window()),
            _ => None,
        }
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            shape: self.shape,
            classes: self.classes,
            modality: self.modality,
            samples: self.samples[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Spike train of sample `index`. Analog samples are encoded with the
    /// stream `(seed, purpose, epoch, index)`; event samples are returned as is.
    pub fn spikes(
        &self,
        index: usize,
        enc: &EncoderConfig,
        seed: u64,
        purpose: Purpose,
        epoch: u64,
    ) -> Result<SpikeTrain> {
        ensure!(index < self.len(), "sample {index} out of range");
        match &self.samples[index] {
            Sample::Events(x) => Ok(x.clone()),
            Sample::Analog(raw) => {
                let mut rng = stream(seed, purpose, epoch, index as u64);
                rate_encode(raw, &[self.shape.len()], enc, &mut rng)
            }
        }
    }
}

/// Sample indices of each batch for one epoch. The permutation depends only
/// on `(seed, epoch)`; the last batch may be shorter.
pub fn batch_iter(ds: &Dataset, batch: usize, shuffle: bool, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    ensure!(batch >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        order.shuffle(&mut stream(seed, Purpose::Shuffle, epoch, 0));
    }
    Ok(order.chunks(batch).map(|c| c.to_vec()).collect())
}
