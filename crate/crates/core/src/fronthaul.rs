//! Quantized views of the channel estimates and received signals that each AP
//! forwards to the central unit.
//!
//! The received signal goes through the Bussgang view (`y̌ = ã·y + e^y`) and
//! the channel estimates through the Max view (`ǧ = ĝ + e^g`). Both are
//! normalized by their analytical powers, `ρ Σ β q + 1` and `γ_mk`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::airlink::{received_power, ChannelEstimate};
use crate::error::{Error, Result};
use crate::quantizer::{quantize_complex_sample, QuantizerDesign};

#[derive(Debug, Clone)]
pub struct QuantizedSignal {
    pub y_check: DVector<Complex64>,
    pub a_tilde: f64,
    /// Per-AP error variance `σ̃²_{e,y} (ρ Σ β q + 1)`.
    pub var_ey: Vec<f64>,
    pub alpha: u32,
}

#[derive(Debug, Clone)]
pub struct QuantizedEstimates {
    pub g_check: DMatrix<Complex64>,
    /// M×K error variances `σ̃²_{e,g} γ_mk`.
    pub var_eg: DMatrix<f64>,
    pub alpha: u32,
}

/// Everything the central unit receives over the backhaul in one coherence
/// block.
#[derive(Debug, Clone)]
pub struct FronthaulView {
    pub estimates: QuantizedEstimates,
    pub signals: Vec<QuantizedSignal>,
}

impl FronthaulView {
    pub fn alpha_g(&self) -> u32 {
        self.estimates.alpha
    }

    pub fn alpha_y(&self) -> Option<u32> {
        self.signals.first().map(|s| s.alpha)
    }
}

pub fn quantize_received(
    y: &DVector<Complex64>,
    beta: &DMatrix<f64>,
    powers: &[f64],
    rho: f64,
    design: &QuantizerDesign,
) -> Result<QuantizedSignal> {
    let (num_aps, num_users) = beta.shape();
    if powers.len() != num_users {
        return Err(Error::Dimension(format!(
            "{} power entries for {} users",
            powers.len(),
            num_users
        )));
    }
    if num_aps == 0 || y.len() % num_aps != 0 {
        return Err(Error::Dimension(format!(
            "signal of length {} does not split over {} APs",
            y.len(),
            num_aps
        )));
    }
    let n_ant = y.len() / num_aps;
    let power = received_power(beta, powers, rho);
    let mut y_check = DVector::zeros(y.len());
    for (i, v) in y.iter().enumerate() {
        y_check[i] = quantize_complex_sample(*v, power[i / n_ant], design)?;
    }
    Ok(QuantizedSignal {
        y_check,
        a_tilde: design.a_tilde,
        var_ey: power.iter().map(|p| design.var_bussgang * p).collect(),
        alpha: design.alpha,
    })
}

pub fn quantize_estimates(estimate: &ChannelEstimate, design: &QuantizerDesign) -> Result<QuantizedEstimates> {
    let n_ant = estimate.antennas_per_ap;
    if let Some(g) = estimate.gamma.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "estimate mean square must be positive, got {g}"
        )));
    }
    let (rows, cols) = estimate.g_hat.shape();
    let mut g_check = DMatrix::zeros(rows, cols);
    for k in 0..cols {
        for row in 0..rows {
            g_check[(row, k)] =
                quantize_complex_sample(estimate.g_hat[(row, k)], estimate.gamma[(row / n_ant, k)], design)?;
        }
    }
    Ok(QuantizedEstimates {
        g_check,
        var_eg: estimate.gamma.map(|g| design.var_max * g),
        alpha: design.alpha,
    })
}
