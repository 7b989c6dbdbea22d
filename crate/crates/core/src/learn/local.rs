//! Local weight consolidation: every learnable layer descends its own loss
//! `L = ½‖h̄ − target‖²` on the window-averaged membrane `h̄`.
//!
//! Within one step the membrane is linear in the layer's weights, so with the
//! temporal recurrence treated as a constant the gradient is the outer product
//! of the layer error with the mean presynaptic spikes (fc), or the
//! correlation of the error map with the mean input map (conv, summed over
//! locations).

use crate::error::{ensure, Result};
use crate::layers::Layer;
use crate::learn::feedback::{project_target, FeedbackMatrix};
use crate::learn::tp::TpMode;
use crate::network::LayerTrace;
use crate::topology::LayerKind;

/// Neuron-space error `h̄ − target` of one layer.
///
/// `brp` pulls `h̄` toward the projected label. `err` and `sign` displace the
/// state by the projected signal, so the error is `b · tp` and vanishes when
/// the output already matches the label.
pub fn layer_error(
    mode: TpMode,
    b: Option<&FeedbackMatrix>,
    tp: &[f32],
    mean_membrane: &[f32],
) -> Result<Vec<f32>> {
    let projected = project_target(b, tp)?;
    ensure!(
        projected.len() == mean_membrane.len(),
        "projected target has {} entries, layer has {} neurons",
        projected.len(),
        mean_membrane.len()
    );
    Ok(match mode {
        TpMode::Brp => mean_membrane.iter().zip(&projected).map(|(h, t)| h - t).collect(),
        TpMode::Err | TpMode::Sign => projected,
        TpMode::PseudoBp => {
            return Err(crate::Error::Contract(
                "pseudo_bp has no per-layer target".into(),
            ))
        }
    })
}

/// `½‖h̄ − target‖²`.
pub fn layer_loss(mean_membrane: &[f32], target: &[f32]) -> f32 {
    0.5 * mean_membrane
        .iter()
        .zip(target)
        .map(|(h, t)| (h - t) * (h - t))
        .sum::<f32>()
}

/// Gradient of the local loss for one sample and an explicit target.
pub fn local_grad(trace: &LayerTrace, target: &[f32], layer: &Layer) -> Result<Vec<f32>> {
    ensure!(
        trace.n_out() == layer.spec.out_len() && trace.pre.frame_len() == layer.spec.in_len(),
        "trace does not belong to this layer"
    );
    ensure!(
        target.len() == layer.spec.out_len(),
        "target has {} entries, layer has {} neurons",
        target.len(),
        layer.spec.out_len()
    );
    let h = trace.mean_membrane();
    let err: Vec<f32> = h.iter().zip(target).map(|(a, b)| a - b).collect();
    let pre = trace.mean_pre();
    weight_grad_rows(layer, &pre, &err, 1, 1.0)
}

/// `scale · Σ_r pre_r ⊗ err_r`, shaped like the layer's weights.
///
/// `pre` is `[rows × in_len]`, `err` is `[rows × out_len]`.
pub fn weight_grad_rows(
    layer: &Layer,
    pre: &[f32],
    err: &[f32],
    rows: usize,
    scale: f32,
) -> Result<Vec<f32>> {
    let spec = &layer.spec;
    let (n_in, n_out) = (spec.in_len(), spec.out_len());
    ensure!(
        pre.len() == rows * n_in && err.len() == rows * n_out,
        "gradient rows do not match layer shape"
    );
    let mut grad = vec![0f32; spec.weight_len()];
    match spec.kind {
        LayerKind::Fc => {
            if rows > 0 {
                // grad[n_in × n_out] = scale · preᵀ · err
                unsafe {
                    matrixmultiply::sgemm(
                        n_in,
                        rows,
                        n_out,
                        scale,
                        pre.as_ptr(),
                        1,
                        n_in as isize,
                        err.as_ptr(),
                        n_out as isize,
                        1,
                        0.0,
                        grad.as_mut_ptr(),
                        n_out as isize,
                        1,
                    );
                }
            }
        }
        LayerKind::Conv2d | LayerKind::Conv1d => {
            for r in 0..rows {
                conv_grad_accumulate(
                    layer,
                    &pre[r * n_in..(r + 1) * n_in],
                    &err[r * n_out..(r + 1) * n_out],
                    &mut grad,
                );
            }
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        LayerKind::Pool => {}
    }
    Ok(grad)
}

/// `grad[oc, ic, ky, kx] += Σ_{y,x} err[oc, y, x] · pre[ic, y + ky, x + kx]`.
fn conv_grad_accumulate(layer: &Layer, pre: &[f32], err: &[f32], grad: &mut [f32]) {
    let s = &layer.spec;
    let (ic_n, ih, iw) = (s.in_shape.c, s.in_shape.h, s.in_shape.w);
    let (oc_n, oh, ow) = (s.out_shape.c, s.out_shape.h, s.out_shape.w);
    let (kh, kw) = s.kernel;
    for oc in 0..oc_n {
        let emap = &err[oc * oh * ow..(oc + 1) * oh * ow];
        if emap.iter().all(|&e| e == 0.0) {
            continue;
        }
        for ic in 0..ic_n {
            let imap = &pre[ic * ih * iw..(ic + 1) * ih * iw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = 0f32;
                    for y in 0..oh {
                        let erow = &emap[y * ow..(y + 1) * ow];
                        let irow = &imap[(y + ky) * iw + kx..(y + ky) * iw + kx + ow];
                        acc += erow.iter().zip(irow).map(|(a, b)| a * b).sum::<f32>();
                    }
                    grad[((oc * ic_n + ic) * kh + ky) * kw + kx] += acc;
                }
            }
        }
    }
}
