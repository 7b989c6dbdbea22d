use crate::error::{ensure, Result};

/// Binary spike tensor laid out as `[t_window × dims...]`, one frame per step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTrain {
    t_window: usize,
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl SpikeTrain {
    pub fn zeros(t_window: usize, dims: &[usize]) -> Result<Self> {
        ensure!(t_window >= 1, "a spike train needs at least one step");
        let frame: usize = dims.iter().product();
        Ok(Self {
            t_window,
            dims: dims.to_vec(),
            data: vec![0; t_window * frame],
        })
    }

    pub fn from_vec(t_window: usize, dims: &[usize], data: Vec<u8>) -> Result<Self> {
        ensure!(t_window >= 1, "a spike train needs at least one step");
        let frame: usize = dims.iter().product();
        ensure!(
            data.len() == t_window * frame,
            "spike data has {} entries, expected {} x {}",
            data.len(),
            t_window,
            frame
        );
        ensure!(data.iter().all(|&s| s <= 1), "spike entries must be 0 or 1");
        Ok(Self {
            t_window,
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn t_window(&self) -> usize {
        self.t_window
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn frame_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Frame at zero-based step `t`.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u8] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.frame_len().max(1))
    }

    pub fn spike_count(&self) -> usize {
        self.data.iter().map(|&s| s as usize).sum()
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }
}
