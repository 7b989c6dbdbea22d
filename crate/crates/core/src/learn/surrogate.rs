//! Surrogate-gradient backpropagation, the layer-by-layer baseline.
//!
//! The output loss is `½‖y − ȳ‖²` on window firerates. The error is carried
//! down through every layer with the chain rule, replacing the derivative of
//! each spike by the rectangular surrogate and treating the temporal
//! recurrence as constant (spatial backpropagation only).
//!
//! The backward pass works on rows. A row is one sample's window averages
//! (presynaptic rates, mean surrogate factor) or, in per-step mode, one
//! `(sample, step)` pair.

use crate::encode::firerate;
use crate::error::{ensure, Result};
use crate::layers::Layer;
use crate::learn::local::weight_grad_rows;
use crate::network::{Network, Trace};
use crate::neuron::surrogate_grad;
use crate::spikes::SpikeTrain;
use crate::topology::{LayerKind, LayerSpec};

/// Inputs of the backward pass for every learnable layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropRows {
    pub rows: usize,
    /// `[rows × in_len]` presynaptic activity.
    pub pre: Vec<Vec<f32>>,
    /// `[rows × out_len]` surrogate factor of each neuron.
    pub surrogate: Vec<Vec<f32>>,
    /// `[rows × out_len]` emitted activity, used to route through pooling.
    pub activity: Vec<Vec<f32>>,
}

impl BackpropRows {
    pub fn empty(learnable: usize) -> Self {
        Self {
            rows: 0,
            pre: vec![Vec::new(); learnable],
            surrogate: vec![Vec::new(); learnable],
            activity: vec![Vec::new(); learnable],
        }
    }

    /// Appends one row of window averages taken from `trace`.
    pub fn push_window(&mut self, net: &Network, trace: &Trace) {
        for (k, tr) in trace.layers.iter().enumerate() {
            self.pre[k].extend(tr.mean_pre());
            let n = tr.n_out();
            let mut s = vec![0f32; n];
            for t in 0..tr.t_window() {
                for (acc, &v) in s.iter_mut().zip(tr.membrane_at(t)) {
                    *acc += surrogate_grad(v, &net.lif);
                }
            }
            let inv = 1.0 / tr.t_window() as f32;
            self.surrogate[k].extend(s.into_iter().map(|x| x * inv));
            self.activity[k].extend(firerate(&tr.out));
        }
        self.rows += 1;
    }

    /// Appends one row per step of `trace`.
    pub fn push_steps(&mut self, net: &Network, trace: &Trace) {
        for (k, tr) in trace.layers.iter().enumerate() {
            self.pre[k].extend(tr.pre.data().iter().map(|&s| s as f32));
            self.surrogate[k].extend(tr.membrane.iter().map(|&v| surrogate_grad(v, &net.lif)));
            self.activity[k].extend(tr.out.data().iter().map(|&s| s as f32));
        }
        self.rows += trace.t_window;
    }
}

/// Gradient with respect to a conv layer's input: the transposed correlation.
fn conv_backward_input(layer: &Layer, delta: &[f32], g_in: &mut [f32]) {
    let s = &layer.spec;
    let (ic_n, ih, iw) = (s.in_shape.c, s.in_shape.h, s.in_shape.w);
    let (oc_n, oh, ow) = (s.out_shape.c, s.out_shape.h, s.out_shape.w);
    let (kh, kw) = s.kernel;
    g_in.fill(0.0);
    for oc in 0..oc_n {
        for ic in 0..ic_n {
            let wk = &layer.w[(oc * ic_n + ic) * kh * kw..(oc * ic_n + ic + 1) * kh * kw];
            for y in 0..oh {
                for x in 0..ow {
                    let d = delta[(oc * oh + y) * ow + x];
                    if d == 0.0 {
                        continue;
                    }
                    for ky in 0..kh {
                        let row = &mut g_in[(ic * ih + y + ky) * iw + x..(ic * ih + y + ky) * iw + x + kw];
                        for (g, &w) in row.iter_mut().zip(&wk[ky * kw..(ky + 1) * kw]) {
                            *g += w * d;
                        }
                    }
                }
            }
        }
    }
}

/// Sends each pooled gradient to the window inputs that were active,
/// split equally; a window with no active input shares it among all inputs.
fn pool_backward(spec: &LayerSpec, active_in: &[f32], g_out: &[f32], g_in: &mut [f32]) {
    let (c_n, ih, iw) = (spec.in_shape.c, spec.in_shape.h, spec.in_shape.w);
    let (oh, ow) = (spec.out_shape.h, spec.out_shape.w);
    let (kh, kw) = spec.kernel;
    g_in.fill(0.0);
    for c in 0..c_n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = g_out[(c * oh + oy) * ow + ox];
                let idx = |dy: usize, dx: usize| (c * ih + oy * kh + dy) * iw + ox * kw + dx;
                let n_active = (0..kh)
                    .flat_map(|dy| (0..kw).map(move |dx| (dy, dx)))
                    .filter(|&(dy, dx)| active_in[idx(dy, dx)] > 0.0)
                    .count();
                for dy in 0..kh {
                    for dx in 0..kw {
                        let i = idx(dy, dx);
                        if n_active == 0 {
                            g_in[i] = g / (kh * kw) as f32;
                        } else if active_in[i] > 0.0 {
                            g_in[i] = g / n_active as f32;
                        }
                    }
                }
            }
        }
    }
}

fn pool_forward_activity(spec: &LayerSpec, active_in: &[f32]) -> Vec<f32> {
    let bits: Vec<u8> = active_in.iter().map(|&a| (a > 0.0) as u8).collect();
    let mut out = vec![0u8; spec.out_len()];
    crate::layers::pool_frame(spec, &bits, &mut out);
    out.into_iter().map(f32::from).collect()
}

/// Chains the output error `[rows × classes]` down the network and returns
/// `scale · Σ_rows pre ⊗ δ` for every learnable layer.
pub fn surrogate_backprop(
    net: &Network,
    rows: &BackpropRows,
    out_err: &[f32],
    scale: f32,
) -> Result<Vec<Vec<f32>>> {
    let learnable = net.learnable();
    let r = rows.rows;
    ensure!(
        rows.pre.len() == learnable.len() && out_err.len() == r * net.num_classes(),
        "backprop rows do not match the network"
    );
    let mut grads = vec![Vec::new(); learnable.len()];
    // gradient w.r.t. the current learnable layer's spike output
    let mut g_out = out_err.to_vec();
    for pos in (0..learnable.len()).rev() {
        let li = learnable[pos];
        let layer = &net.layers[li];
        let (n_in, n_out) = (layer.spec.in_len(), layer.spec.out_len());
        ensure!(
            rows.surrogate[pos].len() == r * n_out && rows.pre[pos].len() == r * n_in,
            "backprop rows for layer {li} have the wrong size"
        );
        let delta: Vec<f32> = g_out
            .iter()
            .zip(&rows.surrogate[pos])
            .map(|(g, s)| g * s)
            .collect();
        grads[pos] = weight_grad_rows(layer, &rows.pre[pos], &delta, r, scale)?;
        if pos == 0 {
            break;
        }
        // gradient w.r.t. this layer's input
        let mut g_in = vec![0f32; r * n_in];
        match layer.spec.kind {
            LayerKind::Fc => unsafe {
                // g_in[r × n_in] = delta[r × n_out] · Wᵀ, W stored [n_in × n_out]
                matrixmultiply::sgemm(
                    r,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    layer.w.as_ptr(),
                    1,
                    n_out as isize,
                    0.0,
                    g_in.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            },
            _ => {
                for row in 0..r {
                    conv_backward_input(
                        layer,
                        &delta[row * n_out..(row + 1) * n_out],
                        &mut g_in[row * n_in..(row + 1) * n_in],
                    );
                }
            }
        }
        // walk back through any pooling layers down to the previous learnable one
        let below = learnable[pos - 1];
        let pools: Vec<usize> = (below + 1..li).collect();
        if !pools.is_empty() {
            let below_out = net.layers[below].spec.out_len();
            for row in 0..r {
                let mut acts = vec![rows.activity[pos - 1][row * below_out..(row + 1) * below_out].to_vec()];
                for &p in &pools[..pools.len() - 1] {
                    let next = pool_forward_activity(&net.layers[p].spec, acts.last().unwrap());
                    acts.push(next);
                }
                let mut g = g_in[row * n_in..(row + 1) * n_in].to_vec();
                for (k, &p) in pools.iter().enumerate().rev() {
                    let spec = &net.layers[p].spec;
                    let mut gi = vec![0f32; spec.in_len()];
                    pool_backward(spec, &acts[k], &g, &mut gi);
                    g = gi;
                }
                if row == 0 {
                    g_out = Vec::with_capacity(r * below_out);
                }
                g_out.extend(g);
            }
        } else {
            g_out = g_in;
        }
    }
    Ok(grads)
}

/// Per-sample surrogate gradients from a captured trace, one tensor per
/// learnable layer.
pub fn pseudo_bp_grads(trace: &Trace, label: &SpikeTrain, net: &Network) -> Result<Vec<Vec<f32>>> {
    ensure!(
        trace.layers.len() == net.learnable().len(),
        "trace covers {} layers, network has {} learnable layers",
        trace.layers.len(),
        net.learnable().len()
    );
    let y = firerate(&trace.output().out);
    let target = firerate(label);
    ensure!(y.len() == target.len(), "label has {} classes, output {}", target.len(), y.len());
    let err: Vec<f32> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
    let mut rows = BackpropRows::empty(trace.layers.len());
    rows.push_window(net, trace);
    surrogate_backprop(net, &rows, &err, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::label_encode;
    use crate::network::network_forward;
    use crate::neuron::LifParams;
    use crate::rng::{stream, Purpose};
    use crate::topology::{resolve, Shape, Topology};
    use rand::Rng;

    fn toy_net(topology: &str, input: Shape, lo: f32, hi: f32, seed: u64) -> Network {
        let t = Topology::parse(topology).unwrap();
        let mut rng = stream(seed, Purpose::Init, 0, 0);
        let layers = resolve(&t, input)
            .unwrap()
            .into_iter()
            .map(|spec| {
                let w = (0..spec.weight_len()).map(|_| rng.gen_range(lo..hi)).collect();
                Layer::new(spec, w).unwrap()
            })
            .collect();
        Network::from_layers(&t, input, layers, LifParams::default()).unwrap()
    }

    #[test]
    fn matched_output_gives_zero_gradients() {
        let net = toy_net("FC6-FC3", Shape::flat(4), -0.5, 1.0, 1);
        let x = SpikeTrain::from_vec(3, &[4], vec![1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1]).unwrap();
        let f = network_forward(&net, &x, true).unwrap();
        let grads = pseudo_bp_grads(f.trace.as_ref().unwrap(), &f.output, &net).unwrap();
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn single_layer_is_delta_rule() {
        let net = toy_net("FC2", Shape::flat(3), 0.1, 0.4, 2);
        let x = SpikeTrain::from_vec(2, &[3], vec![1, 0, 1, 1, 1, 0]).unwrap();
        let f = network_forward(&net, &x, true).unwrap();
        let tr = f.trace.unwrap();
        let label = label_encode(1, 2, 2).unwrap();
        let g = pseudo_bp_grads(&tr, &label, &net).unwrap().remove(0);
        let y = firerate(&f.output);
        let s = tr.layers[0].mean_pre();
        for j in 0..3 {
            for i in 0..2 {
                let e = y[i] - [0.0, 1.0][i];
                let surr: f32 = (0..2).map(|t| surrogate_grad(tr.layers[0].membrane_at(t)[i], &net.lif)).sum::<f32>() / 2.0;
                assert!((g[j * 2 + i] - e * surr * s[j]).abs() < 1e-7);
            }
        }
    }

    /// Single-step network in which every spike is replaced by the clamped
    /// linear ramp whose slope is the rectangular surrogate.
    fn smoothed_loss(net: &Network, w: &[Vec<f64>], x: &[f64], target: &[f64]) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let lif = &net.lif;
        let lo = (lif.v_th - lif.surrogate_width) as f64;
        let width = 2.0 * lif.surrogate_width as f64;
        let mut act = x.to_vec();
        let mut pres = Vec::new();
        let mut membranes = Vec::new();
        for (layer, wl) in net.layers.iter().zip(w) {
            let n_out = layer.spec.out_len();
            let h: Vec<f64> = (0..n_out)
                .map(|i| act.iter().enumerate().map(|(j, a)| wl[j * n_out + i] * a).sum())
                .collect();
            pres.push(act.clone());
            act = h.iter().map(|v| (v - lo).clamp(0.0, width)).collect();
            membranes.push(h);
        }
        let loss = 0.5 * act.iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum::<f64>();
        (loss, pres, membranes)
    }

    #[test]
    fn chained_gradients_match_finite_differences_of_smoothed_net() {
        let net = toy_net("FC5-FC3", Shape::flat(4), 0.05, 0.3, 7);
        let x = [1.0f64, 0.0, 1.0, 1.0];
        let target = [0.0f64, 1.0, 0.0];
        let w0: Vec<Vec<f64>> = net.layers.iter().map(|l| l.w.iter().map(|&v| v as f64).collect()).collect();
        let (_, pres, membranes) = smoothed_loss(&net, &w0, &x, &target);
        let lif = net.lif;
        for h in membranes.iter().flatten() {
            assert!((h - lif.v_th as f64).abs() < lif.surrogate_width as f64, "fixture left the window");
        }
        // rows built from the smoothed forward: activities are the ramp values
        let mut rows = BackpropRows::empty(2);
        rows.rows = 1;
        for k in 0..2 {
            rows.pre[k] = pres[k].iter().map(|&v| v as f32).collect();
            rows.surrogate[k] = membranes[k].iter().map(|&v| surrogate_grad(v as f32, &lif)).collect();
            rows.activity[k] = vec![1.0; membranes[k].len()];
        }
        let lo = (lif.v_th - lif.surrogate_width) as f64;
        let y: Vec<f64> = membranes[1].iter().map(|v| (v - lo).clamp(0.0, 1.0)).collect();
        let err: Vec<f32> = y.iter().zip(&target).map(|(a, b)| (a - b) as f32).collect();
        let grads = surrogate_backprop(&net, &rows, &err, 1.0).unwrap();
        let eps = 1e-6;
        for (k, wl) in w0.iter().enumerate() {
            for idx in 0..wl.len() {
                let mut wp = w0.clone();
                let mut wm = w0.clone();
                wp[k][idx] += eps;
                wm[k][idx] -= eps;
                let fd = (smoothed_loss(&net, &wp, &x, &target).0 - smoothed_loss(&net, &wm, &x, &target).0) / (2.0 * eps);
                assert!(
                    (grads[k][idx] as f64 - fd).abs() <= 1e-4,
                    "layer {k} weight {idx}: {} vs {fd}",
                    grads[k][idx]
                );
            }
        }
    }

    #[test]
    fn pooling_routes_to_active_inputs() {
        let spec = crate::topology::LayerSpec::pool(Shape::new(1, 2, 4), 2).unwrap();
        let active = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let mut g_in = vec![0.0; 8];
        pool_backward(&spec, &active, &[2.0, 4.0], &mut g_in);
        assert_eq!(g_in, vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn conv_pool_stack_runs() {
        let net = toy_net("Cov3*3x2-S2-FC4-FC2", Shape::new(1, 6, 6), -0.3, 0.6, 4);
        let mut rng = stream(5, Purpose::Synth, 0, 0);
        let data: Vec<u8> = (0..5 * 36).map(|_| rng.gen_bool(0.5) as u8).collect();
        let x = SpikeTrain::from_vec(5, &[36], data).unwrap();
        let f = network_forward(&net, &x, true).unwrap();
        let label = label_encode(0, 2, 5).unwrap();
        let grads = pseudo_bp_grads(f.trace.as_ref().unwrap(), &label, &net).unwrap();
        assert_eq!(grads.len(), 3);
        for (g, li) in grads.iter().zip(net.learnable()) {
            assert_eq!(g.len(), net.layers[li].spec.weight_len());
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }
}
