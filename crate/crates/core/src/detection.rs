//! Linear detection at the central unit, the closed-form SINR with quantized
//! fronthaul, ergodic rates and backhaul accounting.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::airlink::{estimate_channels, sample_channel, PilotBook};
use crate::error::{Error, Result};
use crate::fronthaul::quantize_estimates;
use crate::quantizer::QuantizerDesign;

/// Singular-value ratio below which zero-forcing reports rank deficiency.
pub const ZF_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "MRC")]
    Mrc,
    #[serde(rename = "ZF")]
    Zf,
    #[serde(rename = "MMSE")]
    Mmse,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Mrc, DetectorKind::Zf, DetectorKind::Mmse];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Mrc => "MRC",
            DetectorKind::Zf => "ZF",
            DetectorKind::Mmse => "MMSE",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MRC" => Ok(DetectorKind::Mrc),
            "ZF" => Ok(DetectorKind::Zf),
            "MMSE" => Ok(DetectorKind::Mmse),
            other => Err(Error::InvalidArgument(format!("unknown detector '{other}'"))),
        }
    }
}

/// Quantizer parameters that enter the effective noise covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    /// Bussgang gain of the signal quantizer.
    pub a_tilde: f64,
    /// Unit-power signal quantization error `σ̃²_{e,y}` (Bussgang view).
    pub var_y: f64,
    /// Unit-power channel quantization error `σ̃²_{e,g}` (Max view).
    pub var_g: f64,
}

impl Distortion {
    /// Unquantized backhaul.
    pub fn perfect() -> Self {
        Self {
            a_tilde: 1.0,
            var_y: 0.0,
            var_g: 0.0,
        }
    }

    pub fn from_designs(signal: &QuantizerDesign, channel: &QuantizerDesign) -> Self {
        Self {
            a_tilde: signal.a_tilde,
            var_y: signal.var_bussgang,
            var_g: channel.var_max,
        }
    }
}

/// Diagonal effective noise covariance `R = ρ Σ_k q_k (S_k - T_k) + I + F`.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    /// Diagonal of R (length MN).
    pub diag: DVector<f64>,
    /// Column k holds the diagonal of `S_k`.
    pub s: DMatrix<f64>,
    /// Column k holds the diagonal of `T_k`.
    pub t: DMatrix<f64>,
    /// `F = f·I`.
    pub f: f64,
}

impl NoiseCovariance {
    /// Column k holds the diagonal of `W_k = S_k - T_k`.
    pub fn w(&self) -> DMatrix<f64> {
        &self.s - &self.t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }
}

pub fn build_noise_covariance(
    beta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    powers: &[f64],
    rho: f64,
    antennas_per_ap: usize,
    distortion: &Distortion,
) -> Result<NoiseCovariance> {
    let (num_aps, num_users) = beta.shape();
    if gamma.shape() != beta.shape() || powers.len() != num_users {
        return Err(Error::Dimension(format!(
            "beta {:?}, gamma {:?}, {} powers",
            beta.shape(),
            gamma.shape(),
            powers.len()
        )));
    }
    if !(distortion.a_tilde > 0.0) {
        return Err(Error::InvalidArgument("Bussgang gain must be positive".into()));
    }
    let f = distortion.var_y / (distortion.a_tilde * distortion.a_tilde);
    let rows = num_aps * antennas_per_ap;
    let s = DMatrix::from_fn(rows, num_users, |i, k| (f + 1.0) * beta[(i / antennas_per_ap, k)]);
    let t = DMatrix::from_fn(rows, num_users, |i, k| (1.0 - distortion.var_g) * gamma[(i / antennas_per_ap, k)]);
    let diag = DVector::from_fn(rows, |i, _| {
        let interference: f64 = (0..num_users).map(|k| powers[k] * (s[(i, k)] - t[(i, k)])).sum();
        rho * interference + 1.0 + f
    });
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveCovariance { index, value });
    }
    Ok(NoiseCovariance { diag, s, t, f })
}

/// Detector matrix `V̌` (MN × K) built from the quantized channel `ǧ`.
///
/// * MRC: `V̌ = Ǧ`.
/// * ZF: `V̌ = Ǧ (Ǧ^H Ǧ)^{-1}`, so that `V̌^H Ǧ = I`.
/// * MMSE: `V̌ = (ã² ρ Σ_k q_k ǧ_k ǧ_k^H + R)^{-1} Ǧ`, solved through the
///   K×K Woodbury form since R is diagonal.
pub fn build_detector(
    kind: DetectorKind,
    g_check: &DMatrix<Complex64>,
    rlb: &DVector<f64>,
    powers: &[f64],
    rho: f64,
    a_tilde: f64,
) -> Result<DMatrix<Complex64>> {
    let (rows, num_users) = g_check.shape();
    if rlb.len() != rows || powers.len() != num_users {
        return Err(Error::Dimension(format!(
            "channel {:?}, covariance of length {}, {} powers",
            g_check.shape(),
            rlb.len(),
            powers.len()
        )));
    }
    match kind {
        DetectorKind::Mrc => Ok(g_check.clone()),
        DetectorKind::Zf => zero_forcing(g_check),
        DetectorKind::Mmse => mmse(g_check, rlb, powers, rho, a_tilde),
    }
}

fn zero_forcing(g: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if g.nrows() < g.ncols() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    // Singular values of the triangular factor equal those of `g`; working on
    // `g` itself avoids squaring the condition number through the Gram matrix.
    let sv = g.clone().qr().r().singular_values();
    let max = sv.max();
    let ratio = if max > 0.0 { sv.min() / max } else { 0.0 };
    let gram = g.adjoint() * g;
    if ratio <= ZF_RANK_TOLERANCE {
        return Err(Error::RankDeficient { ratio });
    }
    let chol = Cholesky::new(gram).ok_or(Error::RankDeficient { ratio })?;
    Ok(chol.solve(&g.adjoint()).adjoint())
}

fn mmse(
    g: &DMatrix<Complex64>,
    rlb: &DVector<f64>,
    powers: &[f64],
    rho: f64,
    a_tilde: f64,
) -> Result<DMatrix<Complex64>> {
    let num_users = g.ncols();
    // X = R^{-1} Ǧ
    let mut x = g.clone();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row /= Complex64::new(rlb[i], 0.0);
    }
    let scale: Vec<f64> = powers.iter().map(|q| (a_tilde * a_tilde * rho * q).sqrt()).collect();
    let h = g.adjoint() * &x;
    // M = I + S H S, S = diag(scale)
    let m = DMatrix::from_fn(num_users, num_users, |i, j| {
        let v = h[(i, j)] * (scale[i] * scale[j]);
        if i == j {
            v + 1.0
        } else {
            v
        }
    });
    let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
    // Z = M^{-1} S H, correction = X S Z
    let mut sh = h;
    for (i, mut row) in sh.row_iter_mut().enumerate() {
        row *= Complex64::new(scale[i], 0.0);
    }
    let mut z = chol.solve(&sh);
    for (i, mut row) in z.row_iter_mut().enumerate() {
        row *= Complex64::new(scale[i], 0.0);
    }
    Ok(x.clone() - x * z)
}

/// Closed-form SINR of user `k` for detector column `v_k`.
pub fn sinr_closed_form(
    v_k: &DVector<Complex64>,
    g_check: &DMatrix<Complex64>,
    rlb: &DVector<f64>,
    powers: &[f64],
    rho: f64,
    k: usize,
) -> Result<f64> {
    if v_k.len() != g_check.nrows() || rlb.len() != v_k.len() || k >= g_check.ncols() {
        return Err(Error::Dimension("detector, channel and covariance sizes differ".into()));
    }
    if v_k.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroDetector(k));
    }
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (kp, col) in g_check.column_iter().enumerate() {
        let p = rho * powers[kp] * v_k.dotc(&col).norm_sqr();
        if kp == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    let noise: f64 = v_k.iter().zip(rlb.iter()).map(|(v, r)| v.norm_sqr() * r).sum();
    Ok(signal / (interference + noise))
}

/// Closed-form SINR of every user for detector matrix `v`.
pub fn sinrs(
    v: &DMatrix<Complex64>,
    g_check: &DMatrix<Complex64>,
    rlb: &DVector<f64>,
    powers: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let cross = v.adjoint() * g_check;
    let num_users = g_check.ncols();
    (0..num_users)
        .map(|k| {
            let col = v.column(k);
            let noise: f64 = col.iter().zip(rlb.iter()).map(|(x, r)| x.norm_sqr() * r).sum();
            if noise == 0.0 {
                return Err(Error::ZeroDetector(k));
            }
            let mut signal = 0.0;
            let mut interference = 0.0;
            for kp in 0..num_users {
                let p = rho * powers[kp] * cross[(k, kp)].norm_sqr();
                if kp == k {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            Ok(signal / (interference + noise))
        })
        .collect()
}

/// Per-AP backhaul rate in bit/s: `2α(NK + Nτ_f)/T_c`.
pub fn backhaul_rate(
    alpha: u32,
    antennas_per_ap: usize,
    num_users: usize,
    tau_f: usize,
    coherence_s: f64,
) -> Result<f64> {
    backhaul_rate_split(alpha, alpha, antennas_per_ap, num_users, tau_f, coherence_s)
}

/// Backhaul rate when channel estimates and signals use different widths:
/// `2(α_g NK + α_y Nτ_f)/T_c`. Bits are counted exactly before dividing.
pub fn backhaul_rate_split(
    alpha_channel: u32,
    alpha_signal: u32,
    antennas_per_ap: usize,
    num_users: usize,
    tau_f: usize,
    coherence_s: f64,
) -> Result<f64> {
    if alpha_channel == 0
        || alpha_signal == 0
        || antennas_per_ap == 0
        || num_users == 0
        || tau_f == 0
        || !(coherence_s > 0.0)
    {
        return Err(Error::InvalidArgument("backhaul rate arguments must be positive".into()));
    }
    let n = antennas_per_ap as u64;
    let bits = 2 * (alpha_channel as u64 * n * num_users as u64 + alpha_signal as u64 * n * tau_f as u64);
    Ok(bits as f64 / coherence_s)
}

/// How the central unit sees channel estimates and signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backhaul {
    Perfect,
    Quantized {
        signal: QuantizerDesign,
        channel: QuantizerDesign,
    },
}

impl Backhaul {
    pub fn distortion(&self) -> Distortion {
        match self {
            Backhaul::Perfect => Distortion::perfect(),
            Backhaul::Quantized { signal, channel } => Distortion::from_designs(signal, channel),
        }
    }
}

/// Large-scale setup shared by every small-scale realization of one drop.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub beta: &'a DMatrix<f64>,
    pub antennas_per_ap: usize,
    pub pilots: &'a PilotBook,
    pub pilot_snr: f64,
    pub data_snr: f64,
    pub powers: &'a [f64],
}

/// SINRs for one small-scale realization, indexed `[backhaul][detector][user]`.
/// All combinations see the same channel and pilot noise.
pub fn realization_sinrs(
    scenario: &Scenario<'_>,
    backhauls: &[Backhaul],
    detectors: &[DetectorKind],
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let state = sample_channel(scenario.beta, scenario.antennas_per_ap, rng)?;
    let est = estimate_channels(&state, scenario.beta, scenario.pilots, scenario.pilot_snr, rng)?;
    backhauls
        .iter()
        .map(|link| {
            let quantized;
            let g_check = match link {
                Backhaul::Perfect => &est.g_hat,
                Backhaul::Quantized { channel, .. } => {
                    quantized = quantize_estimates(&est, channel)?;
                    &quantized.g_check
                }
            };
            let dist = link.distortion();
            let cov = build_noise_covariance(
                scenario.beta,
                &est.gamma,
                scenario.powers,
                scenario.data_snr,
                scenario.antennas_per_ap,
                &dist,
            )?;
            detectors
                .iter()
                .map(|&kind| {
                    let v = build_detector(
                        kind,
                        g_check,
                        &cov.diag,
                        scenario.powers,
                        scenario.data_snr,
                        dist.a_tilde,
                    )?;
                    sinrs(&v, g_check, &cov.diag, scenario.powers, scenario.data_snr)
                })
                .collect()
        })
        .collect()
}

/// Per-user `E{log2(1 + SINR)}` averaged over `realizations` draws of
/// channels, pilot noise and quantization.
pub fn ergodic_rate(
    scenario: &Scenario<'_>,
    backhaul: &Backhaul,
    detector: DetectorKind,
    realizations: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if realizations == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let mut acc = vec![0.0; scenario.beta.ncols()];
    for _ in 0..realizations {
        let s = realization_sinrs(scenario, std::slice::from_ref(backhaul), &[detector], rng)?;
        for (a, sinr) in acc.iter_mut().zip(&s[0][0]) {
            *a += (1.0 + sinr).log2();
        }
    }
    Ok(acc.into_iter().map(|a| a / realizations as f64).collect())
}
