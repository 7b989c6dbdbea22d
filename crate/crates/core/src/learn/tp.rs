//! Target signals delivered from the output layer.

use std::fmt;
use std::str::FromStr;

use crate::encode::firerate;
use crate::error::{ensure, Error, Result};
use crate::spikes::SpikeTrain;

/// Learning rule of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TpMode {
    /// Label firerate, independent of the network output.
    #[default]
    Brp,
    /// Output firerate minus label firerate.
    Err,
    /// Elementwise sign of the error, with `sign(0) = 0`.
    Sign,
    /// Surrogate-gradient backpropagation baseline.
    PseudoBp,
}

impl TpMode {
    pub const ALL: [TpMode; 4] = [TpMode::Brp, TpMode::Err, TpMode::Sign, TpMode::PseudoBp];

    pub fn as_str(self) -> &'static str {
        match self {
            TpMode::Brp => "brp",
            TpMode::Err => "err",
            TpMode::Sign => "sign",
            TpMode::PseudoBp => "pseudo_bp",
        }
    }

    pub fn uses_feedback(self) -> bool {
        !matches!(self, TpMode::PseudoBp)
    }
}

impl fmt::Display for TpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "brp" => Ok(TpMode::Brp),
            "err" => Ok(TpMode::Err),
            "sign" => Ok(TpMode::Sign),
            "pseudo_bp" | "pseudo-bp" | "pseudobp" => Ok(TpMode::PseudoBp),
            other => Err(Error::Contract(format!("unknown tp mode '{other}'"))),
        }
    }
}

fn sign(x: f32) -> f32 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Class-space signal for one sample.
///
/// `Brp` never looks at `output`; the other modes need both trains to share
/// the window and class dimension.
pub fn compute_tp(mode: TpMode, label: &SpikeTrain, output: &SpikeTrain) -> Result<Vec<f32>> {
    let target = firerate(label);
    if mode == TpMode::Brp {
        return Ok(target);
    }
    ensure!(
        label.t_window() == output.t_window() && label.frame_len() == output.frame_len(),
        "label train [{} x {}] and output train [{} x {}] differ",
        label.t_window(),
        label.frame_len(),
        output.t_window(),
        output.frame_len()
    );
    let y = firerate(output);
    let err = y.iter().zip(&target).map(|(a, b)| a - b);
    Ok(match mode {
        TpMode::Sign => err.map(sign).collect(),
        _ => err.collect(),
    })
}
