//! Independent reference computations used by the acceptance run.
//!
//! Nothing here calls into the engine's numeric kernels; every oracle is a
//! plain nested loop or a textbook recursion.

use brpsnn::encode::firerate;
use brpsnn::layers::Layer;
use brpsnn::network::LayerTrace;
use brpsnn::topology::LayerKind;
use brpsnn::SpikeTrain;

/// Dense valid cross-correlation. Per output, terms are added in ascending
/// input order, the same order the event-driven path uses, so `f32` results
/// must agree bit for bit.
pub fn conv_current(layer: &Layer, input: &[u8]) -> Vec<f32> {
    let s = &layer.spec;
    let (ic_n, ih, iw) = (s.in_shape.c, s.in_shape.h, s.in_shape.w);
    let (oc_n, oh, ow) = (s.out_shape.c, s.out_shape.h, s.out_shape.w);
    let (kh, kw) = s.kernel;
    let mut out = vec![0f32; oc_n * oh * ow];
    for oc in 0..oc_n {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0f32;
                for ic in 0..ic_n {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let w = layer.w[((oc * ic_n + ic) * kh + ky) * kw + kx];
                            acc += w * input[(ic * ih + y + ky) * iw + x + kx] as f32;
                        }
                    }
                }
                out[(oc * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}

/// Row dot products over the `[in × out]` weight layout.
pub fn fc_current(layer: &Layer, input: &[u8]) -> Vec<f32> {
    let n_out = layer.spec.out_len();
    (0..n_out)
        .map(|i| {
            let mut acc = 0f32;
            for (j, &s) in input.iter().enumerate() {
                acc += layer.w[j * n_out + i] * s as f32;
            }
            acc
        })
        .collect()
}

fn current_f64(layer: &Layer, w: &[f64], pre: &[u8]) -> Vec<f64> {
    let s = &layer.spec;
    match s.kind {
        LayerKind::Fc => {
            let n_out = s.out_len();
            (0..n_out)
                .map(|i| pre.iter().enumerate().map(|(j, &x)| w[j * n_out + i] * x as f64).sum())
                .collect()
        }
        _ => {
            let (ic_n, ih, iw) = (s.in_shape.c, s.in_shape.h, s.in_shape.w);
            let (oc_n, oh, ow) = (s.out_shape.c, s.out_shape.h, s.out_shape.w);
            let (kh, kw) = s.kernel;
            let mut out = vec![0f64; oc_n * oh * ow];
            for oc in 0..oc_n {
                for y in 0..oh {
                    for x in 0..ow {
                        for ic in 0..ic_n {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    out[(oc * oh + y) * ow + x] += w[((oc * ic_n + ic) * kh + ky) * kw + kx]
                                        * pre[(ic * ih + y + ky) * iw + x + kx] as f64;
                                }
                            }
                        }
                    }
                }
            }
            out
        }
    }
}

/// `½‖h̄ − target‖²` in `f64`, with weights `w` substituted into the current
/// of every step and the recurrent carry frozen from the trace.
pub fn detached_loss(layer: &Layer, w: &[f64], trace: &LayerTrace, target: &[f32]) -> f64 {
    let n_out = layer.spec.out_len();
    let t_win = trace.t_window();
    let w_actual: Vec<f64> = layer.w.iter().map(|&x| x as f64).collect();
    let mut mean = vec![0f64; n_out];
    for t in 0..t_win {
        let pre = trace.pre.frame(t);
        let cur = current_f64(layer, w, pre);
        let cur_actual = current_f64(layer, &w_actual, pre);
        for i in 0..n_out {
            let carry = trace.membrane_at(t)[i] as f64 - cur_actual[i];
            mean[i] += (carry + cur[i]) / t_win as f64;
        }
    }
    0.5 * mean.iter().zip(target).map(|(h, &t)| (h - t as f64).powi(2)).sum::<f64>()
}

/// Largest relative gap between `grad` and central differences of
/// [`detached_loss`], with denominators floored at `1e-3`.
pub fn finite_difference_gap(layer: &Layer, trace: &LayerTrace, target: &[f32], grad: &[f32]) -> f64 {
    let w0: Vec<f64> = layer.w.iter().map(|&x| x as f64).collect();
    let h = 1e-4;
    let mut worst = 0f64;
    for k in 0..w0.len() {
        let (mut wp, mut wm) = (w0.clone(), w0.clone());
        wp[k] += h;
        wm[k] -= h;
        let fd = (detached_loss(layer, &wp, trace, target) - detached_loss(layer, &wm, trace, target)) / (2.0 * h);
        worst = worst.max((grad[k] as f64 - fd).abs() / fd.abs().max(1e-3));
    }
    worst
}

/// Weight and moments after each step of bias-corrected Adam on one scalar.
pub fn adam_scalar(w0: f64, grads: &[f64], eta: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    let mut out = Vec::with_capacity(grads.len());
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        w -= eta * m_hat / (v_hat.sqrt() + eps);
        out.push(w);
    }
    out
}

/// Binary logistic regression on window firerates, fitted by full-batch
/// gradient descent. Returns accuracy on `(test, test_labels)`.
pub fn logistic_rate_accuracy(
    train: &[&SpikeTrain],
    train_labels: &[usize],
    test: &[&SpikeTrain],
    test_labels: &[usize],
) -> f64 {
    let feats = |xs: &[&SpikeTrain]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| firerate(x).into_iter().map(f64::from).collect())
            .collect()
    };
    let (xtr, xte) = (feats(train), feats(test));
    let d = xtr.first().map_or(0, Vec::len);
    let (mut w, mut b) = (vec![0f64; d], 0f64);
    let n = xtr.len().max(1) as f64;
    for _ in 0..3000 {
        let (mut gw, mut gb) = (vec![0f64; d], 0f64);
        for (x, &y) in xtr.iter().zip(train_labels) {
            let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let e = 1.0 / (1.0 + (-z).exp()) - y as f64;
            gw.iter_mut().zip(x).for_each(|(g, xi)| *g += e * xi);
            gb += e;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= 5.0 * g / n);
        b -= 5.0 * gb / n;
    }
    let correct = xte
        .iter()
        .zip(test_labels)
        .filter(|(x, &y)| {
            let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            (z > 0.0) as usize == y
        })
        .count();
    correct as f64 / xte.len().max(1) as f64
}
