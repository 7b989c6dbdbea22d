//! Synthetic temporal tasks on a single row of input channels.

use std::str::FromStr;

use rand::Rng;

use crate::data::{Dataset, Modality, Sample};
use crate::error::{ensure, Error, Result};
use crate::rng::{stream, Purpose};
use crate::spikes::SpikeTrain;
use crate::topology::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Two spikes on every channel at random onsets. Class 0: separated by 3
    /// to 8 steps; class 1: on consecutive steps. Per-channel counts are
    /// identical.
    Order2,
    /// Bernoulli spikes on every channel with probability rising (class 0)
    /// or falling (class 1) linearly over the window.
    Ramp,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Order2 => "order2",
            SynthKind::Ramp => "ramp",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "order2" => Ok(SynthKind::Order2),
            "ramp" => Ok(SynthKind::Ramp),
            other => Err(Error::contract(format!("unknown synthetic task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Samples per class.
    pub per_class: usize,
    pub channels: usize,
    pub t_window: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, per_class: usize, seed: u64) -> Self {
        Self {
            kind,
            per_class,
            channels: 16,
            t_window: 20,
            seed,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        ensure!(self.per_class >= 1, "need at least one sample per class");
        ensure!(self.channels >= 1, "need at least one channel");
        let min_t = match self.kind {
            SynthKind::Order2 => 10,
            SynthKind::Ramp => 2,
        };
        ensure!(self.t_window >= min_t, "{} needs a window of at least {min_t} steps", self.kind.as_str());
        let (c, t_len) = (self.channels, self.t_window);
        let mut samples = Vec::with_capacity(2 * self.per_class);
        let mut labels = Vec::with_capacity(2 * self.per_class);
        for i in 0..2 * self.per_class {
            let label = i % 2;
            let mut rng = stream(self.seed, Purpose::Synth, 0, i as u64);
            let mut train = SpikeTrain::zeros(t_len, &[c])?;
            match self.kind {
                SynthKind::Order2 => {
                    for ch in 0..c {
                        let gap = if label == 1 { 1 } else { rng.gen_range(3..=8) };
                        let t0 = rng.gen_range(0..t_len - gap);
                        train.frame_mut(t0)[ch] = 1;
                        train.frame_mut(t0 + gap)[ch] = 1;
                    }
                }
                SynthKind::Ramp => {
                    for t in 0..t_len {
                        let rise = (t as f64 + 0.5) / t_len as f64;
                        let p = if label == 0 { rise } else { 1.0 - rise };
                        for s in train.frame_mut(t) {
                            *s = rng.gen_bool(0.5 * p) as u8;
                        }
                    }
                }
            }
            samples.push(Sample::Events(train));
            labels.push(label);
        }
        let mut ds = Dataset::new(Shape::new(1, 1, c), 2, samples, labels)?;
        ds.modality = Modality::Event;
        Ok(ds)
    }
}

/// `per_class` samples of each of the two classes, 16 channels, 20 steps.
pub fn synth_temporal(kind: SynthKind, per_class: usize, seed: u64) -> Result<Dataset> {
    SynthSpec::new(kind, per_class, seed).generate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::firerate;

    fn trains(ds: &Dataset) -> Vec<&SpikeTrain> {
        ds.samples
            .iter()
            .map(|s| match s {
                Sample::Events(t) => t,
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn balanced_and_deterministic() {
        let ds = synth_temporal(SynthKind::Order2, 25, 1).unwrap();
        assert_eq!(ds.class_counts(), vec![25, 25]);
        assert_eq!(ds, synth_temporal(SynthKind::Order2, 25, 1).unwrap());
        assert_ne!(ds, synth_temporal(SynthKind::Order2, 25, 2).unwrap());
        assert!(synth_temporal(SynthKind::Order2, 0, 1).is_err());
        assert_eq!(synth_temporal(SynthKind::Ramp, 7, 1).unwrap().class_counts(), vec![7, 7]);
    }

    #[test]
    fn order2_pairs_share_counts_and_differ_in_timing() {
        let ds = synth_temporal(SynthKind::Order2, 100, 3).unwrap();
        for (x, &label) in trains(&ds).into_iter().zip(&ds.labels) {
            for ch in 0..16 {
                let times: Vec<usize> = x.frames().enumerate().filter(|(_, f)| f[ch] == 1).map(|(t, _)| t).collect();
                assert_eq!(times.len(), 2);
                let gap = times[1] - times[0];
                if label == 1 {
                    assert_eq!(gap, 1);
                } else {
                    assert!((3..=8).contains(&gap));
                }
            }
        }
    }

    /// Logistic regression on window firerates, fitted by batch gradient
    /// descent on one half and scored on the other.
    fn logistic_rate_oracle(ds: &Dataset) -> f64 {
        let feats: Vec<Vec<f64>> = trains(ds)
            .into_iter()
            .map(|x| firerate(x).into_iter().map(f64::from).collect())
            .collect();
        let d = feats[0].len();
        let half = ds.len() / 2;
        let (mut w, mut b) = (vec![0.0f64; d], 0.0f64);
        for _ in 0..2000 {
            let (mut gw, mut gb) = (vec![0.0; d], 0.0);
            for (x, &y) in feats[..half].iter().zip(&ds.labels[..half]) {
                let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let p = 1.0 / (1.0 + (-z).exp());
                let e = p - y as f64;
                gw.iter_mut().zip(x).for_each(|(g, xi)| *g += e * xi);
                gb += e;
            }
            w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= 5.0 * g / half as f64);
            b -= 5.0 * gb / half as f64;
        }
        let correct = feats[half..]
            .iter()
            .zip(&ds.labels[half..])
            .filter(|(x, &y)| {
                let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                (z > 0.0) as usize == y
            })
            .count();
        correct as f64 / (ds.len() - half) as f64
    }

    #[test]
    fn order2_firerates_carry_no_class_information() {
        let ds = synth_temporal(SynthKind::Order2, 500, 11).unwrap();
        let acc = logistic_rate_oracle(&ds);
        assert!(acc <= 0.6, "rate-only oracle scored {acc}");
    }

    #[test]
    fn ramp_classes_mirror_in_time() {
        let ds = synth_temporal(SynthKind::Ramp, 200, 5).unwrap();
        let (mut early, mut late) = ([0usize; 2], [0usize; 2]);
        for (x, &label) in trains(&ds).into_iter().zip(&ds.labels) {
            for (t, f) in x.frames().enumerate() {
                let n = f.iter().filter(|&&s| s == 1).count();
                if t < 10 {
                    early[label] += n;
                } else {
                    late[label] += n;
                }
            }
        }
        assert!(late[0] > early[0] && early[1] > late[1]);
    }
}
