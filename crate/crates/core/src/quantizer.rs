//! Optimal symmetric uniform quantizer for unit-variance Gaussian input.
//!
//! The quantizer is a midrise grid with `L = 2^alpha` reconstruction points at
//! `±(2i-1)Δ/2`, `i = 1..L/2`; anything beyond the last threshold saturates to
//! the outermost point. The same device admits two linear error models:
//!
//! * Bussgang: `h(z) = ã·z + n`, with `n` uncorrelated with the input `z`.
//! * Max: `h(z) = z + e`, with `e` uncorrelated with the output `h(z)`.
//!
//! All moments are evaluated in closed form from the Gaussian density and tail
//! function over the quantizer cells.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::golden_section;

/// Largest supported bit width.
pub const MAX_BITS: u32 = 16;

/// Bracket width at which the step-size search stops.
pub const STEP_TOLERANCE: f64 = 1e-7;

/// Bit widths at or below this use the minimum mean-squared error for the
/// Max-model distortion; wider quantizers use `ã(1-ã)`.
pub const MAX_MODEL_MSE_BITS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerModel {
    /// Output decomposed as a scaled input plus input-uncorrelated distortion.
    Bussgang,
    /// Output decomposed as the input plus output-uncorrelated error.
    Max,
}

/// A uniform quantizer of `alpha` bits and step `delta`, for unit-variance input,
/// together with its Bussgang gain, output second moment and distortion powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerDesign {
    pub alpha: u32,
    pub delta: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub var_bussgang: f64,
    pub var_max: f64,
}

impl QuantizerDesign {
    /// Design with an explicit step size.
    pub fn with_step(alpha: u32, delta: f64) -> Result<Self> {
        let m = CellMoments::evaluate(alpha, delta)?;
        Ok(Self {
            alpha,
            delta,
            a_tilde: m.a,
            b_tilde: m.b,
            var_bussgang: m.b - m.a * m.a,
            var_max: m.max_model_variance(alpha),
        })
    }

    /// Design with the distortion-optimal step size.
    pub fn optimal(alpha: u32) -> Result<Self> {
        optimize_step_size(alpha, QuantizerModel::Bussgang)
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.alpha
    }

    /// Signal-to-distortion ratio `ã²/(b̃-ã²)`.
    pub fn sdnr(&self) -> f64 {
        self.a_tilde * self.a_tilde / self.var_bussgang
    }

    pub fn distortion(&self, model: QuantizerModel) -> f64 {
        match model {
            QuantizerModel::Bussgang => self.var_bussgang,
            QuantizerModel::Max => self.var_max,
        }
    }

    /// Largest reconstruction magnitude, `(L-1)Δ/2`.
    pub fn saturation_level(&self) -> f64 {
        (self.levels() - 1) as f64 * self.delta / 2.0
    }
}

fn check_bits(alpha: u32) -> Result<()> {
    if alpha == 0 || alpha > MAX_BITS {
        return Err(Error::BitWidth(alpha));
    }
    Ok(())
}

fn check_step(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

#[inline]
fn quantize_unchecked(z: f64, half_levels: f64, delta: f64) -> f64 {
    let index = (z / delta).floor().clamp(-half_levels, half_levels - 1.0);
    (index + 0.5) * delta
}

/// Reconstruction point of the cell containing `z`; thresholds belong to the
/// cell above them.
pub fn quantize_sample(z: f64, design: &QuantizerDesign) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite(z));
    }
    let half = (design.levels() / 2) as f64;
    Ok(quantize_unchecked(z, half, design.delta))
}

#[inline]
fn density(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal upper tail.
#[inline]
fn tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// First and second output moments plus the mean-squared error of the
/// quantizer driven by a standard normal input.
#[derive(Debug, Clone, Copy)]
struct CellMoments {
    /// E{z h(z)}
    a: f64,
    /// E{h(z)^2}
    b: f64,
    /// E{(h(z) - z)^2}
    mse: f64,
}

impl CellMoments {
    fn evaluate(alpha: u32, delta: f64) -> Result<Self> {
        check_bits(alpha)?;
        check_step(delta)?;
        let half = 1u64 << (alpha - 1);
        let (mut a, mut b, mut mse) = (0.0, 0.0, 0.0);
        let mut lo = 0.0;
        let mut dens_lo = density(lo);
        let mut tail_lo = tail(lo);
        for i in 1..=half {
            let level = (2 * i - 1) as f64 * delta / 2.0;
            let (hi, dens_hi, tail_hi, hi_dens_hi) = if i == half {
                (f64::INFINITY, 0.0, 0.0, 0.0)
            } else {
                let hi = i as f64 * delta;
                let d = density(hi);
                (hi, d, tail(hi), hi * d)
            };
            let prob = tail_lo - tail_hi;
            let first = dens_lo - dens_hi;
            a += level * first;
            b += level * level * prob;
            mse += prob * (1.0 + level * level) - 2.0 * level * first + (lo * dens_lo - hi_dens_hi);
            lo = hi;
            dens_lo = dens_hi;
            tail_lo = tail_hi;
        }
        // Both half-lines contribute equally.
        Ok(Self {
            a: 2.0 * a,
            b: 2.0 * b,
            mse: 2.0 * mse,
        })
    }

    fn max_model_variance(&self, alpha: u32) -> f64 {
        if alpha <= MAX_MODEL_MSE_BITS {
            self.mse
        } else {
            self.a * (1.0 - self.a)
        }
    }
}

/// Bussgang gain `ã = E{z h(z)}` and output power `b̃ = E{h²(z)}` for a
/// unit-variance Gaussian input.
pub fn bussgang_coefficients(alpha: u32, delta: f64) -> Result<(f64, f64)> {
    let m = CellMoments::evaluate(alpha, delta)?;
    Ok((m.a, m.b))
}

/// Mean-squared error `E{(h(z) - z)²}` for a unit-variance Gaussian input.
pub fn mean_squared_error(alpha: u32, delta: f64) -> Result<f64> {
    Ok(CellMoments::evaluate(alpha, delta)?.mse)
}

/// Distortion power under the chosen error model: `b̃ - ã²` for Bussgang; for
/// Max, the mean-squared error up to five bits and `ã(1-ã)` beyond.
pub fn distortion_power(alpha: u32, delta: f64, model: QuantizerModel) -> Result<f64> {
    let m = CellMoments::evaluate(alpha, delta)?;
    Ok(match model {
        QuantizerModel::Bussgang => m.b - m.a * m.a,
        QuantizerModel::Max => m.max_model_variance(alpha),
    })
}

/// Optimal step size for `alpha` bits.
///
/// The search minimizes the mean-squared error over `(0, 4α]`. For two or more
/// bits its minimizer also maximizes `ã²/(b̃-ã²)`; for one bit that ratio does
/// not depend on the step, and the error minimum fixes it. Both error models
/// therefore share the same device and `model` only documents the caller's
/// intent.
pub fn optimize_step_size(alpha: u32, model: QuantizerModel) -> Result<QuantizerDesign> {
    let _ = model;
    check_bits(alpha)?;
    let hi = 4.0 * alpha as f64;
    let objective = |delta: f64| {
        CellMoments::evaluate(alpha, delta)
            .map(|m| m.mse)
            .unwrap_or(f64::INFINITY)
    };
    let best = golden_section(objective, 0.0, hi, STEP_TOLERANCE);
    let edge = 10.0 * STEP_TOLERANCE;
    let interior = best.x > edge
        && best.x < hi - edge
        && best.value < objective(edge)
        && best.value < objective(hi);
    if !interior {
        return Err(Error::NoInteriorOptimum {
            alpha,
            delta: best.x,
        });
    }
    QuantizerDesign::with_step(alpha, polish_stationary(alpha, best.x))
}

/// The error is stationary in the step exactly where `b̃ = ã`. Bisecting on
/// that difference near the golden-section estimate pins the step down to
/// machine precision; without a sign change the estimate is kept.
fn polish_stationary(alpha: u32, delta: f64) -> f64 {
    let gap = |d: f64| CellMoments::evaluate(alpha, d).map(|m| m.b - m.a).ok();
    let width = 100.0 * STEP_TOLERANCE;
    let (mut lo, mut hi) = (delta - width, delta + width);
    let (Some(g_lo), Some(g_hi)) = (gap(lo), gap(hi)) else {
        return delta;
    };
    if lo <= 0.0 || g_lo.signum() == g_hi.signum() {
        return delta;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match gap(mid) {
            Some(g) if g.signum() == g_lo.signum() => lo = mid,
            Some(_) => hi = mid,
            None => return delta,
        }
    }
    0.5 * (lo + hi)
}

/// Optimal designs for each listed bit width.
pub fn design_table(alphas: impl IntoIterator<Item = u32>) -> Result<Vec<QuantizerDesign>> {
    alphas
        .into_iter()
        .map(|a| optimize_step_size(a, QuantizerModel::Bussgang))
        .collect()
}

fn check_power(power: f64) -> Result<()> {
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normalization power must be positive, got {power}"
        )));
    }
    Ok(())
}

/// Quantize one complex sample whose analytical power is `power`. The real and
/// imaginary parts are each normalized by `sqrt(power/2)`.
pub fn quantize_complex_sample(v: Complex64, power: f64, design: &QuantizerDesign) -> Result<Complex64> {
    check_power(power)?;
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite(if v.re.is_finite() { v.im } else { v.re }));
    }
    let scale = (0.5 * power).sqrt();
    let half = (design.levels() / 2) as f64;
    Ok(Complex64::new(
        quantize_unchecked(v.re / scale, half, design.delta) * scale,
        quantize_unchecked(v.im / scale, half, design.delta) * scale,
    ))
}

/// Quantize every entry of `v`, all with the same analytical power.
pub fn quantize_complex(v: &[Complex64], power: f64, design: &QuantizerDesign) -> Result<Vec<Complex64>> {
    v.iter()
        .map(|&x| quantize_complex_sample(x, power, design))
        .collect()
}

/// Quantization error under the chosen decomposition: `out - ã·input` for
/// Bussgang, `out - input` for Max.
pub fn quantization_error(
    input: &[Complex64],
    output: &[Complex64],
    design: &QuantizerDesign,
    model: QuantizerModel,
) -> Vec<Complex64> {
    let gain = match model {
        QuantizerModel::Bussgang => design.a_tilde,
        QuantizerModel::Max => 1.0,
    };
    input
        .iter()
        .zip(output)
        .map(|(x, y)| y - x * gain)
        .collect()
}
