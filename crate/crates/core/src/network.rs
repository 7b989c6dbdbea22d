//! Layer stacks and the forward pass over a time window.
//!
//! All layers share one clock. Because no signal flows backwards during the
//! forward pass, processing a whole window layer by layer gives exactly the
//! same spikes as advancing every layer one step at a time; the batched path
//! uses the former to reuse each fc weight row across samples and steps.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::layers::{conv_current, fc_current, pool_frame, Layer};
use crate::neuron::{lif_step_into, reset_state, LifParams};
use crate::spikes::SpikeTrain;
use crate::topology::{resolve, LayerKind, Shape, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: Topology,
    pub input: Shape,
    pub layers: Vec<Layer>,
    pub lif: LifParams,
}

impl Network {
    /// Builds a network with uniformly initialized weights.
    pub fn new<R: Rng + ?Sized>(
        topology: &Topology,
        input: Shape,
        lif: LifParams,
        gain: f32,
        rng: &mut R,
    ) -> Result<Self> {
        lif.validate()?;
        let layers = resolve(topology, input)?
            .into_iter()
            .map(|spec| Layer::init(spec, gain, rng))
            .collect();
        Ok(Self {
            topology: topology.clone(),
            input,
            layers,
            lif,
        })
    }

    /// Builds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(topology: &Topology, input: Shape, layers: Vec<Layer>, lif: LifParams) -> Result<Self> {
        lif.validate()?;
        let specs = resolve(topology, input)?;
        ensure!(
            specs.len() == layers.len(),
            "topology has {} layers, got {}",
            specs.len(),
            layers.len()
        );
        for (spec, layer) in specs.iter().zip(&layers) {
            ensure!(*spec == layer.spec, "layer spec {:?} does not match topology", layer.spec);
            ensure!(layer.w.len() == spec.weight_len(), "weight count mismatch");
        }
        Ok(Self {
            topology: topology.clone(),
            input,
            layers,
            lif,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.spec.out_len()).unwrap_or(0)
    }

    /// Indices (into `layers`) of the layers that carry weights and neurons.
    pub fn learnable(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spec.is_learnable())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn canonical_topology(&self) -> String {
        self.topology.canonical(self.input)
    }
}

/// Recorded activity of one learnable layer over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Index of the layer in [`Network::layers`].
    pub layer: usize,
    /// Presynaptic spikes `[T × in_len]`.
    pub pre: SpikeTrain,
    /// Pre-reset membrane potentials `[T × out_len]`.
    pub membrane: Vec<f32>,
    /// Emitted spikes `[T × out_len]`.
    pub out: SpikeTrain,
}

impl LayerTrace {
    pub fn n_out(&self) -> usize {
        self.out.frame_len()
    }

    pub fn t_window(&self) -> usize {
        self.out.t_window()
    }

    pub fn membrane_at(&self, t: usize) -> &[f32] {
        let n = self.n_out();
        &self.membrane[t * n..(t + 1) * n]
    }

    /// Spikes emitted by each neuron over the window.
    pub fn spike_totals(&self) -> Vec<u32> {
        let mut totals = vec![0u32; self.n_out()];
        for frame in self.out.frames() {
            for (c, &s) in totals.iter_mut().zip(frame) {
                *c += s as u32;
            }
        }
        totals
    }

    pub fn mean_membrane(&self) -> Vec<f32> {
        let n = self.n_out();
        let mut acc = vec![0f32; n];
        for t in 0..self.t_window() {
            for (a, &v) in acc.iter_mut().zip(self.membrane_at(t)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.t_window() as f32;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }

    pub fn mean_pre(&self) -> Vec<f32> {
        crate::encode::firerate(&self.pre)
    }
}

/// Per-sample record of every learnable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t_window: usize,
    pub layers: Vec<LayerTrace>,
}

impl Trace {
    pub fn output(&self) -> &LayerTrace {
        self.layers.last().expect("trace of an empty network")
    }
}

/// Result of a forward pass over one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: SpikeTrain,
    pub trace: Option<Trace>,
    /// Synaptic accumulations performed, per learnable layer.
    pub ops: Vec<u64>,
}

impl Forward {
    pub fn total_ops(&self) -> u64 {
        self.ops.iter().sum()
    }
}

fn check_input(net: &Network, input: &SpikeTrain) -> Result<()> {
    ensure!(
        input.frame_len() == net.input.len(),
        "input frames have {} entries, network expects {} ({})",
        input.frame_len(),
        net.input.len(),
        net.input
    );
    ensure!(
        input.data().iter().all(|&s| s <= 1),
        "input spike train is not binary"
    );
    Ok(())
}

/// Runs one sample through the network, advancing all layers step by step
/// from freshly reset states.
pub fn network_forward(net: &Network, input: &SpikeTrain, capture: bool) -> Result<Forward> {
    check_input(net, input)?;
    let t_window = input.t_window();
    let lif = &net.lif;
    let mut states = Vec::new();
    let mut traces = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if layer.spec.has_neurons() {
            states.push(Some(reset_state(layer.spec.out_len(), lif)?));
            if capture {
                traces.push(LayerTrace {
                    layer: i,
                    pre: SpikeTrain::zeros(t_window, &[layer.spec.in_len()])?,
                    membrane: vec![0.0; t_window * layer.spec.out_len()],
                    out: SpikeTrain::zeros(t_window, &[layer.spec.out_len()])?,
                });
            }
        } else {
            states.push(None);
        }
    }
    let mut output = SpikeTrain::zeros(t_window, &[net.num_classes()])?;
    let mut ops = vec![0u64; net.learnable().len()];
    for t in 0..t_window {
        let step = t as u32 + 1;
        let mut signal = input.frame(t).to_vec();
        let mut trace_idx = 0;
        for (layer, state) in net.layers.iter().zip(states.iter_mut()) {
            let spec = &layer.spec;
            let next = match state {
                None => {
                    let mut out = vec![0; spec.out_len()];
                    pool_frame(spec, &signal, &mut out);
                    out
                }
                Some(state) => {
                    let mut current = vec![0.0; spec.out_len()];
                    ops[trace_idx] += match spec.kind {
                        LayerKind::Fc => fc_current(layer, &signal, &mut current),
                        _ => conv_current(layer, &signal, &mut current),
                    };
                    let mut spikes = vec![0; spec.out_len()];
                    let mut membrane = vec![0.0; spec.out_len()];
                    lif_step_into(state, &current, lif, step, &mut spikes, &mut membrane)?;
                    if capture {
                        let tr = &mut traces[trace_idx];
                        tr.pre.frame_mut(t).copy_from_slice(&signal);
                        tr.membrane[t * spec.out_len()..(t + 1) * spec.out_len()]
                            .copy_from_slice(&membrane);
                        tr.out.frame_mut(t).copy_from_slice(&spikes);
                    }
                    trace_idx += 1;
                    spikes
                }
            };
            signal = next;
        }
        output.frame_mut(t).copy_from_slice(&signal);
    }
    Ok(Forward {
        output,
        trace: capture.then_some(Trace {
            t_window,
            layers: traces,
        }),
        ops,
    })
}

/// Integrates one sample's currents `[T × n]` through a fresh LIF population.
fn integrate(current: &[f32], n: usize, lif: &LifParams, spikes: &mut [u8], membrane: &mut [f32]) -> Result<()> {
    let mut state = reset_state(n, lif)?;
    for (t, ((c, s), m)) in current
        .chunks_exact(n)
        .zip(spikes.chunks_exact_mut(n))
        .zip(membrane.chunks_exact_mut(n))
        .enumerate()
    {
        lif_step_into(&mut state, c, lif, t as u32 + 1, s, m)?;
    }
    Ok(())
}

/// fc currents for all `(sample, step)` rows at once: each presynaptic
/// neuron's weight row is visited once and added to every row where it spiked.
/// Also returns the number of active inputs per row.
fn fc_rows(layer: &Layer, pre: &[u8], rows: usize) -> (Vec<f32>, Vec<u64>) {
    let n_in = layer.spec.in_len();
    let n_out = layer.spec.out_len();
    let mut active: Vec<Vec<u32>> = vec![Vec::new(); n_in];
    let mut per_row = vec![0u64; rows];
    for (r, count) in per_row.iter_mut().enumerate() {
        for (j, &s) in pre[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if s != 0 {
                active[j].push(r as u32);
                *count += 1;
            }
        }
    }
    let mut current = vec![0f32; rows * n_out];
    for (j, rows_j) in active.iter().enumerate() {
        let w = &layer.w[j * n_out..(j + 1) * n_out];
        for &r in rows_j {
            let c = &mut current[r as usize * n_out..(r as usize + 1) * n_out];
            for (ci, &wi) in c.iter_mut().zip(w) {
                *ci += wi;
            }
        }
    }
    (current, per_row)
}

fn forward_group(net: &Network, inputs: &[&SpikeTrain], capture: bool) -> Result<Vec<Forward>> {
    let samples = inputs.len();
    let t_window = inputs[0].t_window();
    let rows = samples * t_window;
    let mut signal: Vec<u8> = Vec::with_capacity(rows * net.input.len());
    for x in inputs {
        signal.extend_from_slice(x.data());
    }
    let mut per_sample: Vec<Vec<LayerTrace>> = vec![Vec::new(); samples];
    let mut ops = vec![Vec::new(); samples];
    for (li, layer) in net.layers.iter().enumerate() {
        let spec = &layer.spec;
        let (n_in, n_out) = (spec.in_len(), spec.out_len());
        let next = match spec.kind {
            LayerKind::Pool => {
                let mut out = vec![0u8; rows * n_out];
                for r in 0..rows {
                    pool_frame(
                        spec,
                        &signal[r * n_in..(r + 1) * n_in],
                        &mut out[r * n_out..(r + 1) * n_out],
                    );
                }
                out
            }
            kind => {
                ops.iter_mut().for_each(|o| o.push(0));
                let per = t_window * n_out;
                let fc = if kind == LayerKind::Fc {
                    let (c, per_row) = fc_rows(layer, &signal, rows);
                    for (r, active) in per_row.into_iter().enumerate() {
                        *ops[r / t_window].last_mut().unwrap() += active * n_out as u64;
                    }
                    Some(c)
                } else {
                    None
                };
                let mut out = vec![0u8; rows * n_out];
                let mut conv_buf = vec![0f32; if fc.is_some() { 0 } else { per }];
                let mut membrane = vec![0f32; per];
                for b in 0..samples {
                    let (r0, r1) = (b * t_window, (b + 1) * t_window);
                    let current = match &fc {
                        Some(c) => &c[r0 * n_out..r1 * n_out],
                        None => {
                            for t in 0..t_window {
                                let r = r0 + t;
                                *ops[b].last_mut().unwrap() += conv_current(
                                    layer,
                                    &signal[r * n_in..(r + 1) * n_in],
                                    &mut conv_buf[t * n_out..(t + 1) * n_out],
                                );
                            }
                            &conv_buf[..]
                        }
                    };
                    let spikes = &mut out[r0 * n_out..r1 * n_out];
                    integrate(current, n_out, &net.lif, spikes, &mut membrane)?;
                    if capture {
                        per_sample[b].push(LayerTrace {
                            layer: li,
                            pre: SpikeTrain::from_vec(t_window, &[n_in], signal[r0 * n_in..r1 * n_in].to_vec())?,
                            membrane: membrane.clone(),
                            out: SpikeTrain::from_vec(t_window, &[n_out], spikes.to_vec())?,
                        });
                    }
                }
                out
            }
        };
        signal = next;
    }
    let n_cls = net.num_classes();
    per_sample
        .into_iter()
        .zip(ops)
        .enumerate()
        .map(|(b, (layers, ops))| {
            let r0 = b * t_window;
            Ok(Forward {
                output: SpikeTrain::from_vec(
                    t_window,
                    &[n_cls],
                    signal[r0 * n_cls..(r0 + t_window) * n_cls].to_vec(),
                )?,
                trace: capture.then_some(Trace { t_window, layers }),
                ops,
            })
        })
        .collect()
}

/// Forward pass over a batch, equivalent sample by sample to
/// [`network_forward`]. With `threads > 1` samples are split into groups
/// processed in parallel; results do not depend on the thread count.
pub fn forward_batch(
    net: &Network,
    inputs: &[SpikeTrain],
    capture: bool,
    threads: usize,
) -> Result<Vec<Forward>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let t_window = inputs[0].t_window();
    for x in inputs {
        check_input(net, x)?;
        ensure!(x.t_window() == t_window, "batch mixes time windows");
    }
    let refs: Vec<&SpikeTrain> = inputs.iter().collect();
    if threads <= 1 {
        return forward_group(net, &refs, capture);
    }
    let chunk = refs.len().div_ceil(threads);
    let groups: Vec<Result<Vec<Forward>>> = refs
        .par_chunks(chunk)
        .map(|g| forward_group(net, g, capture))
        .collect();
    let mut out = Vec::with_capacity(inputs.len());
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}
