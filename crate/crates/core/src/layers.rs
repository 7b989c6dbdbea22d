//! Per-step kernels of the spiking layers.
//!
//! Currents are accumulated event-driven: only inputs that spiked contribute,
//! and every output receives its contributions in ascending input order. That
//! order is the same as a plain nested loop over all inputs, so results match
//! a dense reference bit for bit.

use rand::Rng;

use crate::error::{ensure, Result};
use crate::neuron::{lif_step_into, LifParams, LifState};
use crate::topology::{LayerKind, LayerSpec};

/// A layer's geometry plus its weights.
///
/// Weight layout: conv `[out_ch × in_ch × kh × kw]`; fc `[in × out]` (one
/// contiguous row of outgoing weights per presynaptic neuron); pool has none.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub w: Vec<f32>,
}

impl Layer {
    pub fn new(spec: LayerSpec, w: Vec<f32>) -> Result<Self> {
        ensure!(
            w.len() == spec.weight_len(),
            "layer {:?} expects {} weights, got {}",
            spec.kind,
            spec.weight_len(),
            w.len()
        );
        ensure!(w.iter().all(|x| x.is_finite()), "weights must be finite");
        Ok(Self { spec, w })
    }

    /// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)) initialization.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, gain: f32, rng: &mut R) -> Self {
        let fan_in = match spec.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => spec.in_shape.c * spec.kernel.0 * spec.kernel.1,
            LayerKind::Fc => spec.in_len(),
            LayerKind::Pool => 1,
        };
        let bound = gain / (fan_in as f32).sqrt();
        let w = (0..spec.weight_len())
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { spec, w }
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            w: vec![0.0; spec.weight_len()],
        }
    }
}

/// Valid cross-correlation of a binary frame with the layer kernel.
/// Returns the number of synaptic accumulations performed.
///
/// Every output receives its contributions in ascending input order. The
/// accumulation runs channel-last so that each active input adds whole
/// kernel-tap vectors across output channels.
pub fn conv_current(layer: &Layer, input: &[u8], current: &mut [f32]) -> u64 {
    let spec = &layer.spec;
    let (ic_n, ih, iw) = (spec.in_shape.c, spec.in_shape.h, spec.in_shape.w);
    let (oc_n, oh, ow) = (spec.out_shape.c, spec.out_shape.h, spec.out_shape.w);
    let (kh, kw) = spec.kernel;
    debug_assert_eq!(input.len(), ic_n * ih * iw);
    debug_assert_eq!(current.len(), oc_n * oh * ow);
    // taps[ic][ky][kx][oc]
    let mut taps = vec![0f32; layer.w.len()];
    for oc in 0..oc_n {
        for k in 0..ic_n * kh * kw {
            taps[k * oc_n + oc] = layer.w[oc * ic_n * kh * kw + k];
        }
    }
    let mut acc = vec![0f32; oh * ow * oc_n];
    let mut ops = 0u64;
    for ic in 0..ic_n {
        for iy in 0..ih {
            let row = &input[(ic * ih + iy) * iw..(ic * ih + iy + 1) * iw];
            for (ix, &s) in row.iter().enumerate() {
                if s == 0 {
                    continue;
                }
                let ky_lo = (iy + 1).saturating_sub(oh);
                let ky_hi = kh.min(iy + 1);
                let kx_lo = (ix + 1).saturating_sub(ow);
                let kx_hi = kw.min(ix + 1);
                for ky in ky_lo..ky_hi {
                    let y = iy - ky;
                    for kx in kx_lo..kx_hi {
                        let x = ix - kx;
                        let t0 = ((ic * kh + ky) * kw + kx) * oc_n;
                        let tap = &taps[t0..t0 + oc_n];
                        let out = &mut acc[(y * ow + x) * oc_n..(y * ow + x + 1) * oc_n];
                        for (o, &w) in out.iter_mut().zip(tap) {
                            *o += w;
                        }
                    }
                }
                ops += (oc_n * (ky_hi - ky_lo) * (kx_hi - kx_lo)) as u64;
            }
        }
    }
    for (p, vals) in acc.chunks_exact(oc_n).enumerate() {
        for (oc, &v) in vals.iter().enumerate() {
            current[oc * oh * ow + p] = v;
        }
    }
    ops
}

/// `current = Wᵀ · input` for an fc layer. Returns accumulation count.
pub fn fc_current(layer: &Layer, input: &[u8], current: &mut [f32]) -> u64 {
    let n_out = layer.spec.out_len();
    debug_assert_eq!(input.len(), layer.spec.in_len());
    current.fill(0.0);
    let mut active = 0u64;
    for (j, &s) in input.iter().enumerate() {
        if s != 0 {
            let row = &layer.w[j * n_out..(j + 1) * n_out];
            for (c, &w) in current.iter_mut().zip(row) {
                *c += w;
            }
            active += 1;
        }
    }
    active * n_out as u64
}

/// Binary OR over each non-overlapping pooling window.
pub fn pool_frame(spec: &LayerSpec, input: &[u8], out: &mut [u8]) {
    let (c_n, ih, iw) = (spec.in_shape.c, spec.in_shape.h, spec.in_shape.w);
    let (oh, ow) = (spec.out_shape.h, spec.out_shape.w);
    let (kh, kw) = spec.kernel;
    out.fill(0);
    for c in 0..c_n {
        for iy in 0..oh * kh {
            for ix in 0..ow * kw {
                if input[(c * ih + iy) * iw + ix] != 0 {
                    out[(c * oh + iy / kh) * ow + ix / kw] = 1;
                }
            }
        }
    }
}

fn check_binary(input: &[u8], expected: usize) -> Result<()> {
    ensure!(
        input.len() == expected,
        "input frame has {} entries, layer expects {}",
        input.len(),
        expected
    );
    ensure!(input.iter().all(|&s| s <= 1), "input frame is not binary");
    Ok(())
}

/// Output spikes and pre-reset membrane potentials of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub spikes: Vec<u8>,
    pub membrane: Vec<f32>,
}

fn neuron_step(
    layer: &Layer,
    lif: &LifParams,
    state: &mut LifState,
    current: &[f32],
    step: u32,
) -> Result<StepOutput> {
    ensure!(
        state.len() == layer.spec.out_len(),
        "state holds {} neurons, layer has {}",
        state.len(),
        layer.spec.out_len()
    );
    let n = state.len();
    let mut out = StepOutput {
        spikes: vec![0; n],
        membrane: vec![0.0; n],
    };
    lif_step_into(state, current, lif, step, &mut out.spikes, &mut out.membrane)?;
    Ok(out)
}

/// One step of a 2D spiking convolution.
pub fn conv2d_step(
    layer: &Layer,
    lif: &LifParams,
    state: &mut LifState,
    in_spikes: &[u8],
    step: u32,
) -> Result<StepOutput> {
    ensure!(
        matches!(layer.spec.kind, LayerKind::Conv2d | LayerKind::Conv1d),
        "conv2d_step on a {:?} layer",
        layer.spec.kind
    );
    check_binary(in_spikes, layer.spec.in_len())?;
    let mut current = vec![0.0; layer.spec.out_len()];
    conv_current(layer, in_spikes, &mut current);
    neuron_step(layer, lif, state, &current, step)
}

/// One step of a 1D spiking convolution over a `[channels × length]` frame.
pub fn conv1d_step(
    layer: &Layer,
    lif: &LifParams,
    state: &mut LifState,
    in_spikes: &[u8],
    step: u32,
) -> Result<StepOutput> {
    ensure!(
        layer.spec.kind == LayerKind::Conv1d,
        "conv1d_step needs a single-row kernel over a single-row input, got {:?}",
        layer.spec.kind
    );
    conv2d_step(layer, lif, state, in_spikes, step)
}

/// One step of OR-pooling. Stateless and weightless.
pub fn pool_step(spec: &LayerSpec, in_spikes: &[u8]) -> Result<Vec<u8>> {
    ensure!(spec.kind == LayerKind::Pool, "pool_step on a {:?} layer", spec.kind);
    check_binary(in_spikes, spec.in_len())?;
    let mut out = vec![0; spec.out_len()];
    pool_frame(spec, in_spikes, &mut out);
    Ok(out)
}

/// One step of a fully-connected spiking layer.
pub fn fc_step(
    layer: &Layer,
    lif: &LifParams,
    state: &mut LifState,
    in_spikes: &[u8],
    step: u32,
) -> Result<StepOutput> {
    ensure!(layer.spec.kind == LayerKind::Fc, "fc_step on a {:?} layer", layer.spec.kind);
    check_binary(in_spikes, layer.spec.in_len())?;
    let mut current = vec![0.0; layer.spec.out_len()];
    fc_current(layer, in_spikes, &mut current);
    neuron_step(layer, lif, state, &current, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::reset_state;
    use crate::rng::{stream, Purpose};
    use crate::topology::Shape;

    fn random_bits(n: usize, p: f64, seed: u64) -> Vec<u8> {
        let mut rng = stream(seed, Purpose::Synth, 0, 0);
        (0..n).map(|_| rng.gen_bool(p) as u8).collect()
    }

    fn random_layer(spec: LayerSpec, seed: u64) -> Layer {
        Layer::init(spec, 1.0, &mut stream(seed, Purpose::Init, 0, 0))
    }

    // Dense nested-loop references, independent of the event-driven path.
    fn conv_oracle(layer: &Layer, input: &[u8]) -> Vec<f32> {
        let s = &layer.spec;
        let (ic_n, ih, iw) = (s.in_shape.c, s.in_shape.h, s.in_shape.w);
        let (oc_n, oh, ow) = (s.out_shape.c, s.out_shape.h, s.out_shape.w);
        let (kh, kw) = s.kernel;
        let mut out = vec![0.0f32; oc_n * oh * ow];
        for oc in 0..oc_n {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0f32;
                    for ic in 0..ic_n {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let w = layer.w[((oc * ic_n + ic) * kh + ky) * kw + kx];
                                let xin = input[(ic * ih + y + ky) * iw + x + kx] as f32;
                                acc += w * xin;
                            }
                        }
                    }
                    out[(oc * oh + y) * ow + x] = acc;
                }
            }
        }
        out
    }

    fn fc_oracle(layer: &Layer, input: &[u8]) -> Vec<f32> {
        let n_out = layer.spec.out_len();
        (0..n_out)
            .map(|i| {
                let mut acc = 0.0f32;
                for (j, &s) in input.iter().enumerate() {
                    acc += layer.w[j * n_out + i] * s as f32;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn conv2d_zero_input_is_silent() {
        let spec = LayerSpec::conv(Shape::new(1, 6, 6), 3, 3, 2).unwrap();
        let layer = random_layer(spec, 1);
        let lif = LifParams::default();
        let mut st = reset_state(spec.out_len(), &lif).unwrap();
        let out = conv2d_step(&layer, &lif, &mut st, &[0; 36], 1).unwrap();
        assert!(out.spikes.iter().all(|&s| s == 0));
        assert!(out.membrane.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_unit_kernel_fires() {
        let spec = LayerSpec::conv(Shape::new(1, 1, 1), 1, 1, 1).unwrap();
        let layer = Layer::new(spec, vec![0.6]).unwrap();
        let lif = LifParams::default();
        let mut st = reset_state(1, &lif).unwrap();
        let out = conv2d_step(&layer, &lif, &mut st, &[1], 1).unwrap();
        assert_eq!(out.spikes, vec![1]);
        assert!((out.membrane[0] - 0.6).abs() < 1e-7);
        assert_eq!(st.v[0], 0.0);
    }

    #[test]
    fn conv2d_matches_nested_loop_oracle() {
        for seed in 0..8 {
            let spec = LayerSpec::conv(Shape::new(2, 6, 6), 3, 3, 3).unwrap();
            let layer = random_layer(spec, seed);
            let input = random_bits(spec.in_len(), 0.4, seed + 100);
            let mut current = vec![0.0; spec.out_len()];
            conv_current(&layer, &input, &mut current);
            assert_eq!(current, conv_oracle(&layer, &input));
        }
    }

    #[test]
    fn conv1d_examples() {
        let spec = LayerSpec::conv(Shape::new(1, 1, 3), 1, 3, 1).unwrap();
        let layer = Layer::new(spec, vec![0.5, 0.5, 0.5]).unwrap();
        let lif = LifParams::default();
        let mut st = reset_state(1, &lif).unwrap();
        let out = conv1d_step(&layer, &lif, &mut st, &[0, 0, 0], 1).unwrap();
        assert_eq!(out.spikes, vec![0]);
        let out = conv1d_step(&layer, &lif, &mut st, &[1, 0, 1], 2).unwrap();
        assert_eq!(out.membrane, vec![1.0]);
        assert_eq!(out.spikes, vec![1]);
    }

    #[test]
    fn conv1d_matches_nested_loop_oracle() {
        let spec = LayerSpec::conv(Shape::new(1, 1, 20), 1, 3, 4).unwrap();
        for seed in 0..8 {
            let layer = random_layer(spec, seed);
            let input = random_bits(20, 0.5, seed + 7);
            let mut current = vec![0.0; spec.out_len()];
            conv_current(&layer, &input, &mut current);
            assert_eq!(current, conv_oracle(&layer, &input));
        }
    }

    #[test]
    fn conv1d_rejects_2d_layer() {
        let spec = LayerSpec::conv(Shape::new(1, 4, 4), 3, 3, 1).unwrap();
        let layer = Layer::zeros(spec);
        let lif = LifParams::default();
        let mut st = reset_state(spec.out_len(), &lif).unwrap();
        assert!(conv1d_step(&layer, &lif, &mut st, &[0; 16], 1).is_err());
    }

    #[test]
    fn pooling_is_or() {
        let spec = LayerSpec::pool(Shape::new(1, 2, 2), 2).unwrap();
        assert_eq!(pool_step(&spec, &[0, 0, 0, 0]).unwrap(), vec![0]);
        assert_eq!(pool_step(&spec, &[1, 0, 0, 0]).unwrap(), vec![1]);
        let spec = LayerSpec::pool(Shape::new(2, 4, 4), 2).unwrap();
        assert_eq!(pool_step(&spec, &[1; 32]).unwrap(), vec![1; 8]);
        assert!(pool_step(&spec, &[1; 31]).is_err());
        assert!(pool_step(&spec, &[2; 32]).is_err());
    }

    #[test]
    fn fc_examples() {
        let lif = LifParams::default();
        let zero = Layer::zeros(LayerSpec::fc(3, 2));
        let mut st = reset_state(2, &lif).unwrap();
        for step in 1..=5 {
            let out = fc_step(&zero, &lif, &mut st, &[1, 1, 1], step).unwrap();
            assert_eq!(out.spikes, vec![0, 0]);
        }
        let layer = Layer::new(LayerSpec::fc(2, 1), vec![0.5, 0.5]).unwrap();
        let mut st = reset_state(1, &lif).unwrap();
        let out = fc_step(&layer, &lif, &mut st, &[1, 1], 1).unwrap();
        assert_eq!(out.membrane, vec![1.0]);
        assert_eq!(out.spikes, vec![1]);
    }

    #[test]
    fn fc_matches_dot_product_oracle() {
        let spec = LayerSpec::fc(64, 16);
        for seed in 0..8 {
            let layer = random_layer(spec, seed);
            let input = random_bits(64, 0.3, seed + 50);
            let mut current = vec![0.0; 16];
            fc_current(&layer, &input, &mut current);
            assert_eq!(current, fc_oracle(&layer, &input));
        }
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let lif = LifParams::default();
        let layer = Layer::zeros(LayerSpec::fc(3, 2));
        let mut st = reset_state(2, &lif).unwrap();
        assert!(fc_step(&layer, &lif, &mut st, &[1, 1], 1).is_err());
        let mut wrong = reset_state(5, &lif).unwrap();
        assert!(fc_step(&layer, &lif, &mut wrong, &[1, 1, 1], 1).is_err());
        assert!(Layer::new(LayerSpec::fc(3, 2), vec![0.0; 5]).is_err());
    }
}
