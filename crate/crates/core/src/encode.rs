//! Analog-to-spike encoding, label trains and firerates.

use rand::Rng;

use crate::error::{ensure, Result};
use crate::spikes::SpikeTrain;

/// Comparison direction of the random spike generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Spike iff `u < alpha * raw`: firing probability grows with intensity.
    #[default]
    Intensity,
    /// Spike iff `raw < alpha * u`, the comparison exactly as usually printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Scale of the uniform generator, in (0, 1].
    pub alpha: f32,
    pub polarity: Polarity,
    pub t_window: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            polarity: Polarity::Intensity,
            t_window: 20,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha > 0.0 && self.alpha <= 1.0,
            "alpha must lie in (0, 1], got {}",
            self.alpha
        );
        ensure!(self.t_window >= 1, "time window must be at least one step");
        Ok(())
    }
}

/// Samples a `[T × dims]` spike train from intensities in `[0, 1]`.
///
/// Draws are taken step-major, element-minor, so a given rng state always
/// yields the same train.
pub fn rate_encode<R: Rng + ?Sized>(
    raw: &[f32],
    dims: &[usize],
    cfg: &EncoderConfig,
    rng: &mut R,
) -> Result<SpikeTrain> {
    cfg.validate()?;
    ensure!(
        raw.len() == dims.iter().product::<usize>(),
        "raw tensor has {} values, dims {:?}",
        raw.len(),
        dims
    );
    if let Some(bad) = raw.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(crate::Error::Contract(format!(
            "raw intensity {bad} outside [0, 1]; normalize before encoding"
        )));
    }
    let mut train = SpikeTrain::zeros(cfg.t_window, dims)?;
    for t in 0..cfg.t_window {
        let frame = train.frame_mut(t);
        for (s, &x) in frame.iter_mut().zip(raw) {
            let u: f32 = rng.gen();
            let fire = match cfg.polarity {
                Polarity::Intensity => u < cfg.alpha * x,
                Polarity::Literal => x < cfg.alpha * u,
            };
            *s = fire as u8;
        }
    }
    Ok(train)
}

/// Label train for `class`: the target neuron fires at every step.
pub fn label_encode(class: usize, num_classes: usize, t_window: usize) -> Result<SpikeTrain> {
    ensure!(
        class < num_classes,
        "class {class} out of range for {num_classes} classes"
    );
    let mut train = SpikeTrain::zeros(t_window, &[num_classes])?;
    for t in 0..t_window {
        train.frame_mut(t)[class] = 1;
    }
    Ok(train)
}

/// Mean spike count per step for every neuron.
pub fn firerate(train: &SpikeTrain) -> Vec<f32> {
    let n = train.frame_len();
    let mut counts = vec![0u32; n];
    for frame in train.frames() {
        for (c, &s) in counts.iter_mut().zip(frame) {
            *c += s as u32;
        }
    }
    let t = train.t_window() as f32;
    counts.into_iter().map(|c| c as f32 / t).collect()
}

/// Keeps each spike independently with probability `keep`.
pub fn thin<R: Rng + ?Sized>(train: &SpikeTrain, keep: f32, rng: &mut R) -> Result<SpikeTrain> {
    ensure!((0.0..=1.0).contains(&keep), "keep probability {keep} outside [0, 1]");
    let data = train
        .data()
        .iter()
        .map(|&s| {
            let u: f32 = rng.gen();
            (s == 1 && u < keep) as u8
        })
        .collect();
    SpikeTrain::from_vec(train.t_window(), train.dims(), data)
}
