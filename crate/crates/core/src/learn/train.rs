//! The epoch loop and evaluation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{batch_iter, Dataset};
use crate::encode::{firerate, label_encode, thin, EncoderConfig};
use crate::error::{ensure, Error, Result};
use crate::learn::adam::{adam_update, AdamConfig, AdamState};
use crate::learn::feedback::{init_feedback, project_target, FeedbackMatrices, FeedbackScale};
use crate::learn::local::{layer_error, weight_grad_rows};
use crate::learn::surrogate::{surrogate_backprop, BackpropRows};
use crate::learn::tp::{compute_tp, TpMode};
use crate::metrics::{count_ops, OpCount, SilentTally};
use crate::network::{forward_batch, Network, Trace};
use crate::rng::{stream, Purpose};
use crate::spikes::SpikeTrain;
use crate::topology::LayerKind;

/// When the target signal is applied within a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TpApply {
    /// Once, on window-averaged states.
    #[default]
    PerWindow,
    /// At every step, on that step's state, each step weighted `1/T`.
    PerStep,
}

impl TpApply {
    pub fn as_str(self) -> &'static str {
        match self {
            TpApply::PerWindow => "per_window",
            TpApply::PerStep => "per_step",
        }
    }
}

impl fmt::Display for TpApply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TpApply {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_window" => Ok(TpApply::PerWindow),
            "per_step" => Ok(TpApply::PerStep),
            other => Err(Error::contract(format!("unknown tp.apply '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TpMode,
    pub apply: TpApply,
    pub eta_conv: f32,
    pub eta_fc: f32,
    pub batch: usize,
    pub shuffle: bool,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TpMode::Brp,
            apply: TpApply::PerWindow,
            eta_conv: 1e-4,
            eta_fc: 1e-4,
            batch: 50,
            shuffle: true,
            encoder: EncoderConfig::default(),
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        ensure!(self.batch >= 1, "batch size must be at least 1");
        ensure!(
            self.eta_conv >= 0.0 && self.eta_fc >= 0.0 && self.eta_conv.is_finite() && self.eta_fc.is_finite(),
            "learning rates must be finite and non-negative"
        );
        Ok(())
    }
}

/// Settings for inference passes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub batch: usize,
    pub threads: usize,
    /// Probability of keeping each input spike; 1 leaves inputs untouched.
    pub input_keep: f32,
}

impl EvalConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            encoder: cfg.encoder,
            seed: cfg.seed,
            batch: cfg.batch,
            threads: cfg.threads,
            input_keep: 1.0,
        }
    }
}

/// Network plus everything learning keeps between batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Network,
    pub feedback: FeedbackMatrices,
    /// One state per learnable layer.
    pub optim: Vec<AdamState<f32>>,
}

impl Model {
    pub fn new(net: Network, seed: u64, scale: FeedbackScale) -> Self {
        let feedback = init_feedback(&net, seed, scale);
        let optim = net
            .learnable()
            .iter()
            .map(|&li| AdamState::new(net.layers[li].spec.weight_len()))
            .collect();
        Self { net, feedback, optim }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub accuracy: f64,
    /// Mean over samples of `½‖y − ȳ‖²`.
    pub loss: f64,
    pub ops: OpCount,
    /// Mean silent fraction per learnable layer.
    pub silent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub accuracy: f64,
    pub loss: f64,
    pub silent: Vec<f64>,
    pub forward_ops: Vec<u64>,
    pub predictions: Vec<usize>,
}

/// Index of the largest firerate, ties going to the lowest index.
pub fn predict(output: &SpikeTrain) -> usize {
    let mut counts = vec![0u32; output.frame_len()];
    for f in output.frames() {
        for (c, &s) in counts.iter_mut().zip(f) {
            *c += s as u32;
        }
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn output_loss(output: &SpikeTrain, label: &SpikeTrain) -> f64 {
    let y = firerate(output);
    let t = firerate(label);
    0.5 * y.iter().zip(&t).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()
}

fn label_train(ds: &Dataset, idx: usize, t_window: usize) -> Result<SpikeTrain> {
    label_encode(ds.labels[idx], ds.classes, t_window)
}

fn check_compatible(net: &Network, ds: &Dataset) -> Result<()> {
    ensure!(
        ds.shape.len() == net.input.len(),
        "dataset samples have shape {}, network input is {}",
        ds.shape,
        net.input
    );
    ensure!(
        ds.classes == net.num_classes(),
        "dataset has {} classes, network outputs {}",
        ds.classes,
        net.num_classes()
    );
    Ok(())
}

fn par_map<T: Send, F>(threads: usize, n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    if threads > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Weight gradients for one batch, one tensor per learnable layer, each the
/// mean over the batch. Reads only the traces, the labels and, for the
/// target modes, the fixed feedback matrices.
pub fn batch_grads(
    model: &Model,
    traces: &[&Trace],
    labels: &[SpikeTrain],
    cfg: &TrainConfig,
) -> Result<Vec<Vec<f32>>> {
    let net = &model.net;
    let learnable = net.learnable();
    let b = traces.len();
    ensure!(b == labels.len() && b > 0, "batch of {b} traces and {} labels", labels.len());
    let t_window = traces[0].t_window;
    let inv_b = 1.0 / b as f32;

    if cfg.mode == TpMode::PseudoBp {
        let classes = net.num_classes();
        let mut rows = BackpropRows::empty(learnable.len());
        let mut err = Vec::new();
        for (tr, label) in traces.iter().zip(labels) {
            let y = firerate(&tr.output().out);
            let target = firerate(label);
            let e = y.iter().zip(&target).map(|(a, t)| a - t);
            match cfg.apply {
                TpApply::PerWindow => {
                    rows.push_window(net, tr);
                    err.extend(e);
                }
                TpApply::PerStep => {
                    rows.push_steps(net, tr);
                    let e: Vec<f32> = e.map(|x| x / t_window as f32).collect();
                    for _ in 0..t_window {
                        err.extend_from_slice(&e);
                    }
                }
            }
        }
        debug_assert_eq!(err.len(), rows.rows * classes);
        return surrogate_backprop(net, &rows, &err, inv_b);
    }

    let tps: Vec<Vec<f32>> = traces
        .iter()
        .zip(labels)
        .map(|(tr, label)| compute_tp(cfg.mode, label, &tr.output().out))
        .collect::<Result<_>>()?;

    par_map(cfg.threads, learnable.len(), |pos| {
        let layer = &net.layers[learnable[pos]];
        let fb = model.feedback.layers[pos].as_ref();
        let (n_in, n_out) = (layer.spec.in_len(), layer.spec.out_len());
        match cfg.apply {
            TpApply::PerWindow => {
                let mut pre = Vec::with_capacity(b * n_in);
                let mut err = Vec::with_capacity(b * n_out);
                for (tr, tp) in traces.iter().zip(&tps) {
                    let lt = &tr.layers[pos];
                    pre.extend(lt.mean_pre());
                    err.extend(layer_error(cfg.mode, fb, tp, &lt.mean_membrane())?);
                }
                weight_grad_rows(layer, &pre, &err, b, inv_b)
            }
            TpApply::PerStep => {
                let rows = b * t_window;
                let mut pre = Vec::with_capacity(rows * n_in);
                let mut err = Vec::with_capacity(rows * n_out);
                for (tr, tp) in traces.iter().zip(&tps) {
                    let lt = &tr.layers[pos];
                    pre.extend(lt.pre.data().iter().map(|&s| s as f32));
                    let target = project_target(fb, tp)?;
                    for t in 0..t_window {
                        match cfg.mode {
                            TpMode::Brp => err.extend(lt.membrane_at(t).iter().zip(&target).map(|(h, g)| h - g)),
                            _ => err.extend_from_slice(&target),
                        }
                    }
                }
                weight_grad_rows(layer, &pre, &err, rows, inv_b / t_window as f32)
            }
        }
    })
    .into_iter()
    .collect()
}

/// One pass over `ds` in batches; the only place weights change.
pub fn train_epoch(model: &mut Model, ds: &Dataset, cfg: &TrainConfig, epoch: u64) -> Result<EpochStats> {
    cfg.validate()?;
    check_compatible(&model.net, ds)?;
    let k = model.net.learnable().len();
    let mut ops = OpCount::new(cfg.mode, k);
    let mut silent = SilentTally::new(k);
    let (mut correct, mut loss_sum) = (0usize, 0f64);
    let adam = AdamConfig::default();

    for batch in batch_iter(ds, cfg.batch, cfg.shuffle, cfg.seed, epoch)? {
        let inputs: Vec<SpikeTrain> = batch
            .iter()
            .map(|&i| ds.spikes(i, &cfg.encoder, cfg.seed, Purpose::TrainEncoding, epoch))
            .collect::<Result<_>>()?;
        let t_window = inputs[0].t_window();
        let labels: Vec<SpikeTrain> = batch
            .iter()
            .map(|&i| label_train(ds, i, t_window))
            .collect::<Result<_>>()?;
        let fwd = forward_batch(&model.net, &inputs, true, cfg.threads)?;
        let traces: Vec<&Trace> = fwd.iter().map(|f| f.trace.as_ref().expect("captured")).collect();
        for ((f, tr), (&i, label)) in fwd.iter().zip(&traces).zip(batch.iter().zip(&labels)) {
            ops.add_forward(&f.ops);
            correct += (predict(&f.output) == ds.labels[i]) as usize;
            loss_sum += output_loss(&f.output, label);
            silent.add(&tr.layers.iter().map(|l| l.spike_totals()).collect::<Vec<_>>());
        }

        let grads = batch_grads(model, &traces, &labels, cfg)?;
        let rows = match cfg.apply {
            TpApply::PerWindow => 1,
            TpApply::PerStep => t_window as u64,
        };
        ops.add_update(&count_ops(cfg.mode, &model.net, rows), batch.len() as u64);

        let learnable = model.net.learnable();
        for ((pos, &li), g) in learnable.iter().enumerate().zip(&grads) {
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("gradient of layer {li} contains {bad}")));
            }
            let layer = &mut model.net.layers[li];
            let eta = match layer.spec.kind {
                LayerKind::Fc => cfg.eta_fc,
                _ => cfg.eta_conv,
            };
            adam_update(&mut layer.w, g, &mut model.optim[pos], eta, &adam);
        }
    }
    let n = ds.len().max(1) as f64;
    Ok(EpochStats {
        accuracy: correct as f64 / n,
        loss: loss_sum / n,
        ops,
        silent: silent.fractions(),
    })
}

/// Inference over the whole dataset with reproducible encoding.
pub fn evaluate(net: &Network, ds: &Dataset, cfg: &EvalConfig) -> Result<EvalStats> {
    check_compatible(net, ds)?;
    ensure!(cfg.batch >= 1, "batch size must be at least 1");
    ensure!(
        (0.0..=1.0).contains(&cfg.input_keep),
        "input keep probability {} outside [0, 1]",
        cfg.input_keep
    );
    let k = net.learnable().len();
    let mut silent = SilentTally::new(k);
    let mut forward_ops = vec![0u64; k];
    let mut predictions = Vec::with_capacity(ds.len());
    let (mut correct, mut loss_sum) = (0usize, 0f64);
    let order: Vec<usize> = (0..ds.len()).collect();
    for chunk in order.chunks(cfg.batch) {
        let inputs: Vec<SpikeTrain> = chunk
            .iter()
            .map(|&i| {
                let x = ds.spikes(i, &cfg.encoder, cfg.seed, Purpose::EvalEncoding, 0)?;
                if cfg.input_keep < 1.0 {
                    thin(&x, cfg.input_keep, &mut stream(cfg.seed, Purpose::Thinning, 0, i as u64))
                } else {
                    Ok(x)
                }
            })
            .collect::<Result<_>>()?;
        for (f, &i) in forward_batch(net, &inputs, true, cfg.threads)?.iter().zip(chunk) {
            let tr = f.trace.as_ref().expect("captured");
            silent.add(&tr.layers.iter().map(|l| l.spike_totals()).collect::<Vec<_>>());
            forward_ops.iter_mut().zip(&f.ops).for_each(|(a, b)| *a += b);
            let p = predict(&f.output);
            correct += (p == ds.labels[i]) as usize;
            loss_sum += output_loss(&f.output, &label_train(ds, i, f.output.t_window())?);
            predictions.push(p);
        }
    }
    let n = ds.len().max(1) as f64;
    Ok(EvalStats {
        accuracy: correct as f64 / n,
        loss: loss_sum / n,
        silent: silent.fractions(),
        forward_ops,
        predictions,
    })
}
