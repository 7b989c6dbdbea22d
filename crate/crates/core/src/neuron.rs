//! Discrete-time leaky integrate-and-fire neurons.
//!
//! One step of length `dt = 1` advances every neuron as
//!
//! ```text
//! v' = v_rest + g * (v - v_rest) + I     (outside refractory)
//! v' = v + I                             (refractory: decay suppressed)
//! spike iff v' >= v_th, then v' = v_reset
//! ```
//!
//! Membrane capacitance is absorbed into the weight units, so potentials,
//! conductances and times are dimensionless model quantities.

use crate::error::{ensure, Error, Result};

/// Neuron constants shared by every spiking layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Per-step decay factor toward `v_rest`.
    pub g: f32,
    pub v_th: f32,
    pub v_reset: f32,
    pub v_rest: f32,
    /// Refractory duration in steps.
    pub tau_ref: u32,
    /// Half-width of the rectangular surrogate window around `v_th`.
    pub surrogate_width: f32,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            g: 0.2,
            v_th: 0.5,
            v_reset: 0.0,
            v_rest: 0.0,
            tau_ref: 1,
            surrogate_width: 0.5,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.g > 0.0 && self.g < 1.0, "decay g must lie in (0, 1), got {}", self.g);
        ensure!(
            self.v_reset <= self.v_th,
            "v_reset ({}) must not exceed v_th ({})",
            self.v_reset,
            self.v_th
        );
        ensure!(
            self.surrogate_width > 0.0,
            "surrogate width must be positive, got {}",
            self.surrogate_width
        );
        ensure!(
            [self.g, self.v_th, self.v_reset, self.v_rest, self.surrogate_width]
                .iter()
                .all(|x| x.is_finite()),
            "neuron parameters must be finite"
        );
        Ok(())
    }
}

/// Membrane potentials and last spike times for a population.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub v: Vec<f32>,
    /// Step index of each neuron's most recent spike, `None` if it never fired.
    pub last_spike: Vec<Option<u32>>,
}

impl LifState {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn in_refractory(&self, neuron: usize, step: u32, params: &LifParams) -> bool {
        match self.last_spike[neuron] {
            Some(t) => step.saturating_sub(t) < params.tau_ref,
            None => false,
        }
    }

    /// Back to rest without reallocating.
    pub fn reset(&mut self, params: &LifParams) {
        self.v.fill(params.v_rest);
        self.last_spike.fill(None);
    }
}

/// Fresh population of `n` neurons at rest.
pub fn reset_state(n: usize, params: &LifParams) -> Result<LifState> {
    ensure!(n >= 1, "a neuron population needs at least one neuron");
    Ok(LifState {
        v: vec![params.v_rest; n],
        last_spike: vec![None; n],
    })
}

/// Advances `state` by one step and returns the binary spike vector.
pub fn lif_step(
    state: &mut LifState,
    input_current: &[f32],
    params: &LifParams,
    step: u32,
) -> Result<Vec<u8>> {
    let mut spikes = vec![0u8; state.len()];
    let mut membrane = vec![0f32; state.len()];
    lif_step_into(state, input_current, params, step, &mut spikes, &mut membrane)?;
    Ok(spikes)
}

/// Allocation-free form of [`lif_step`]. `membrane` receives the potential
/// reached at this step before any reset.
pub fn lif_step_into(
    state: &mut LifState,
    input_current: &[f32],
    params: &LifParams,
    step: u32,
    spikes: &mut [u8],
    membrane: &mut [f32],
) -> Result<()> {
    let n = state.len();
    ensure!(
        input_current.len() == n && spikes.len() == n && membrane.len() == n,
        "input current has {} entries for {} neurons",
        input_current.len(),
        n
    );
    ensure!(step >= 1, "steps are counted from 1");
    if let Some(i) = input_current.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite input current {} at neuron {i}, step {step}",
            input_current[i]
        )));
    }
    let LifParams {
        g,
        v_th,
        v_reset,
        v_rest,
        tau_ref,
        ..
    } = *params;
    let cells = state.v.iter_mut().zip(state.last_spike.iter_mut());
    let io = input_current.iter().zip(spikes.iter_mut().zip(membrane.iter_mut()));
    for ((v, last), (&input, (spike, mem))) in cells.zip(io) {
        let refractory = matches!(*last, Some(t) if step.saturating_sub(t) < tau_ref);
        let next = if refractory {
            *v + input
        } else {
            v_rest + g * (*v - v_rest) + input
        };
        *mem = next;
        if next >= v_th {
            *spike = 1;
            *v = v_reset;
            *last = Some(step);
        } else {
            *spike = 0;
            *v = next;
        }
    }
    Ok(())
}

/// Rectangular surrogate for the derivative of the spike nonlinearity:
/// 1 inside `|v - v_th| <= surrogate_width`, 0 elsewhere.
#[inline]
pub fn surrogate_grad(v: f32, params: &LifParams) -> f32 {
    if (v - params.v_th).abs() <= params.surrogate_width {
        1.0
    } else {
        0.0
    }
}
