//! Experiment orchestration: sweeps over bit widths and detectors, averaged
//! over random drops and small-scale realizations.
//!
//! Drop `i` draws everything from `derive_seed(seed, i)`, so any partition of
//! the drops across workers reproduces the serial run exactly.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airlink::{build_pilot_book, PilotBook};
use crate::detection::{backhaul_rate_split, realization_sinrs, Backhaul, DetectorKind, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{drop_network, large_scale_fading, noise_power, normalize_power, PathLossModel};
use crate::quantizer::{QuantizerDesign, MAX_BITS};
use crate::random::{derive_seed, rng_for};

/// Drop count used by the full-scale setting.
pub const FULL_SCALE_DROPS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of APs, M.
    pub num_aps: usize,
    /// Antennas per AP, N.
    pub antennas_per_ap: usize,
    /// Number of users, K.
    pub num_users: usize,
    pub side_km: f64,
    pub tau_p: usize,
    pub tau_c: usize,
    pub coherence_ms: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub pilot_power_mw: f64,
    pub data_power_mw: f64,
    /// Power-control coefficient q_k, the same for every user.
    pub user_power: f64,
    pub sigma_sh_db: f64,
    pub pathloss: PathLossModel,
    /// Bit widths to sweep. Each applies to signals and, unless
    /// `channel_bits` is set, to channel estimates.
    pub alphas: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_bits: Option<u32>,
    pub detectors: Vec<DetectorKind>,
    pub n_drops: usize,
    pub n_inner: usize,
    pub seed: u64,
    /// Multiply rates by the pilot-overhead factor `1 - τ_p/τ_c`.
    pub overhead_prefactor: bool,
    /// Also evaluate the unquantized baseline.
    pub perfect_backhaul: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_aps: 5,
            antennas_per_ap: 20,
            num_users: 40,
            side_km: 1.0,
            tau_p: 40,
            tau_c: 200,
            coherence_ms: 1.0,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            pilot_power_mw: 100.0,
            data_power_mw: 100.0,
            user_power: 1.0,
            sigma_sh_db: 8.0,
            pathloss: PathLossModel::default(),
            alphas: (1..=12).collect(),
            channel_bits: None,
            detectors: DetectorKind::ALL.to_vec(),
            n_drops: 50,
            n_inner: 50,
            seed: 1,
            overhead_prefactor: false,
            perfect_backhaul: true,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_aps", self.num_aps),
            ("antennas_per_ap", self.antennas_per_ap),
            ("num_users", self.num_users),
            ("tau_p", self.tau_p),
            ("tau_c", self.tau_c),
            ("n_drops", self.n_drops),
            ("n_inner", self.n_inner),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        if self.tau_p > self.tau_c {
            return Err(config_err(format!(
                "tau_p ≤ tau_c violated: tau_p = {} > tau_c = {}",
                self.tau_p, self.tau_c
            )));
        }
        for (name, v) in [
            ("side_km", self.side_km),
            ("coherence_ms", self.coherence_ms),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pilot_power_mw", self.pilot_power_mw),
            ("data_power_mw", self.data_power_mw),
            ("user_power", self.user_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.noise_figure_db.is_finite() {
            return Err(config_err("noise_figure_db must be finite"));
        }
        if !(self.sigma_sh_db.is_finite() && self.sigma_sh_db >= 0.0) {
            return Err(config_err(format!("sigma_sh_db must be non-negative, got {}", self.sigma_sh_db)));
        }
        self.pathloss
            .validate()
            .map_err(|e| config_err(format!("pathloss: {e}")))?;
        for &a in self.alphas.iter().chain(self.channel_bits.iter()) {
            if a == 0 || a > MAX_BITS {
                return Err(config_err(format!("alphas: bit width {a} outside 1..={MAX_BITS}")));
            }
        }
        if self.alphas.is_empty() && !self.perfect_backhaul {
            return Err(config_err("alphas is empty and perfect_backhaul is off: nothing to run"));
        }
        if self.detectors.is_empty() {
            return Err(config_err("detectors must not be empty"));
        }
        if self.detectors.contains(&DetectorKind::Zf) && self.num_aps * self.antennas_per_ap < self.num_users {
            return Err(config_err("detectors: ZF needs num_aps * antennas_per_ap >= num_users"));
        }
        Ok(())
    }

    /// Same setup at the full drop count.
    pub fn full_scale(mut self) -> Self {
        self.n_drops = FULL_SCALE_DROPS;
        self
    }

    /// Uplink data samples per coherence block.
    pub fn tau_f(&self) -> usize {
        self.tau_c - self.tau_p
    }

    pub fn coherence_s(&self) -> f64 {
        self.coherence_ms * 1e-3
    }

    pub fn noise_w(&self) -> f64 {
        noise_power(self.bandwidth_hz, self.noise_figure_db)
    }

    /// Normalized data SNR ρ.
    pub fn data_snr(&self) -> f64 {
        normalize_power(self.data_power_mw * 1e-3, self.noise_w())
    }

    /// Normalized pilot SNR p_p.
    pub fn pilot_snr(&self) -> f64 {
        normalize_power(self.pilot_power_mw * 1e-3, self.noise_w())
    }

    /// Backhaul settings in report order: baseline first, then each α.
    pub fn settings(&self) -> Result<Vec<Setting>> {
        let mut designs = BTreeMap::new();
        let mut design = |a: u32| -> Result<QuantizerDesign> {
            if let Some(d) = designs.get(&a) {
                return Ok(*d);
            }
            let d = QuantizerDesign::optimal(a)?;
            designs.insert(a, d);
            Ok(d)
        };
        let mut out = Vec::new();
        if self.perfect_backhaul {
            out.push(Setting {
                alpha: None,
                channel_alpha: None,
                backhaul: Backhaul::Perfect,
            });
        }
        for &a in &self.alphas {
            let ca = self.channel_bits.unwrap_or(a);
            out.push(Setting {
                alpha: Some(a),
                channel_alpha: Some(ca),
                backhaul: Backhaul::Quantized {
                    signal: design(a)?,
                    channel: design(ca)?,
                },
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    /// Signal bits; `None` for the unquantized baseline.
    pub alpha: Option<u32>,
    pub channel_alpha: Option<u32>,
    pub backhaul: Backhaul,
}

/// Rates of one drop, indexed `[setting][detector][user]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropResult {
    pub index: usize,
    pub rates: Vec<Vec<Vec<f64>>>,
}

/// Per-user ergodic rates of one (bit width, detector) pair across drops.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub detector: DetectorKind,
    /// `None` marks the perfect-backhaul baseline.
    pub alpha: Option<u32>,
    pub channel_alpha: Option<u32>,
    /// `[drop][user]` in bit/s/Hz.
    pub per_drop_rates: Vec<Vec<f64>>,
    /// Per-AP backhaul load in bit/s, absent for the baseline.
    pub backhaul_rate_per_ap: Option<f64>,
}

impl RateReport {
    /// Per-user rates averaged over drops.
    pub fn per_user_rates(&self) -> Vec<f64> {
        let k = self.per_drop_rates.first().map_or(0, Vec::len);
        let n = self.per_drop_rates.len() as f64;
        (0..k)
            .map(|u| self.per_drop_rates.iter().map(|d| d[u]).sum::<f64>() / n)
            .collect()
    }

    /// Every per-user rate of every drop, drop-major.
    pub fn cdf_samples(&self) -> Vec<f64> {
        self.per_drop_rates.iter().flatten().copied().collect()
    }

    pub fn avg_rate(&self) -> f64 {
        let s = self.cdf_samples();
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Standard error of `avg_rate`, treating drops as the independent unit.
    /// Needs at least two drops.
    pub fn std_error(&self) -> Option<f64> {
        let n = self.per_drop_rates.len();
        if n < 2 {
            return None;
        }
        let means: Vec<f64> = self
            .per_drop_rates
            .iter()
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
            .collect();
        let mu = means.iter().sum::<f64>() / n as f64;
        let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some((var / n as f64).sqrt())
    }
}

fn drop_rates(config: &SimConfig, settings: &[Setting], index: usize) -> Result<DropResult> {
    let drop_seed = derive_seed(config.seed, index as u64);
    let layout = drop_network(config.num_aps, config.num_users, config.side_km, derive_seed(drop_seed, 0))
        .map_err(|e| e.at(index, None))?;
    let beta = large_scale_fading(&layout, &config.pathloss, config.sigma_sh_db, derive_seed(drop_seed, 1));
    let pilots: PilotBook =
        build_pilot_book(config.num_users, config.tau_p, &mut rng_for(drop_seed, 2)).map_err(|e| e.at(index, None))?;
    let powers = vec![config.user_power; config.num_users];
    let scenario = Scenario {
        beta: &beta,
        antennas_per_ap: config.antennas_per_ap,
        pilots: &pilots,
        pilot_snr: config.pilot_snr(),
        data_snr: config.data_snr(),
        powers: &powers,
    };
    let backhauls: Vec<Backhaul> = settings.iter().map(|s| s.backhaul).collect();
    let mut acc = vec![vec![vec![0.0; config.num_users]; config.detectors.len()]; settings.len()];
    for j in 0..config.n_inner {
        let mut rng = rng_for(drop_seed, 3 + j as u64);
        let sinr = realization_sinrs(&scenario, &backhauls, &config.detectors, &mut rng)
            .map_err(|e| e.at(index, Some(j)))?;
        for (a_set, s_set) in acc.iter_mut().zip(&sinr) {
            for (a_det, s_det) in a_set.iter_mut().zip(s_set) {
                for (a, s) in a_det.iter_mut().zip(s_det) {
                    *a += (1.0 + s).log2();
                }
            }
        }
    }
    let scale = if config.overhead_prefactor {
        (1.0 - config.tau_p as f64 / config.tau_c as f64) / config.n_inner as f64
    } else {
        1.0 / config.n_inner as f64
    };
    for r in acc.iter_mut().flatten().flatten() {
        *r *= scale;
    }
    Ok(DropResult { index, rates: acc })
}

/// Run a contiguous range of drops. Any split of `0..n_drops` merged with
/// [`assemble`] equals [`run_experiment`].
pub fn run_drops(config: &SimConfig, drops: Range<usize>) -> Result<Vec<DropResult>> {
    config.validate()?;
    let settings = config.settings()?;
    drops
        .into_par_iter()
        .map(|i| drop_rates(config, &settings, i))
        .collect()
}

/// Gather drop results (in any order, each drop once) into reports: one per
/// (setting, detector), baseline first.
pub fn assemble(config: &SimConfig, mut drops: Vec<DropResult>) -> Result<Vec<RateReport>> {
    if drops.is_empty() {
        return Err(Error::Empty("drop results"));
    }
    drops.sort_by_key(|d| d.index);
    if drops.windows(2).any(|w| w[0].index == w[1].index) {
        return Err(Error::InvalidArgument("duplicate drop index".into()));
    }
    let settings = config.settings()?;
    let mut reports = Vec::new();
    for (si, setting) in settings.iter().enumerate() {
        let bh = match (setting.alpha, setting.channel_alpha) {
            (Some(a), Some(ca)) => Some(backhaul_rate_split(
                ca,
                a,
                config.antennas_per_ap,
                config.num_users,
                config.tau_f(),
                config.coherence_s(),
            )?),
            _ => None,
        };
        for (di, &detector) in config.detectors.iter().enumerate() {
            reports.push(RateReport {
                detector,
                alpha: setting.alpha,
                channel_alpha: setting.channel_alpha,
                per_drop_rates: drops.iter().map(|d| d.rates[si][di].clone()).collect(),
                backhaul_rate_per_ap: bh,
            });
        }
    }
    Ok(reports)
}

pub fn run_experiment(config: &SimConfig) -> Result<Vec<RateReport>> {
    let drops = run_drops(config, 0..config.n_drops)?;
    assemble(config, drops)
}

/// Linear-interpolation percentile, `p` in [0, 100].
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("percentile samples"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub detector: DetectorKind,
    pub alpha: Option<u32>,
    pub channel_alpha: Option<u32>,
    pub avg_rate: f64,
    pub std_error: Option<f64>,
    /// 5th percentile of the pooled per-user rates.
    pub outage_rate_5pct: f64,
    pub backhaul_rate_per_ap: Option<f64>,
}

pub fn summarize(reports: &[RateReport]) -> Result<Vec<ReportSummary>> {
    if reports.is_empty() {
        return Err(Error::Empty("rate reports"));
    }
    reports
        .iter()
        .map(|r| {
            let samples = r.cdf_samples();
            if samples.is_empty() {
                return Err(Error::Empty("report without rates"));
            }
            Ok(ReportSummary {
                detector: r.detector,
                alpha: r.alpha,
                channel_alpha: r.channel_alpha,
                avg_rate: samples.iter().sum::<f64>() / samples.len() as f64,
                std_error: r.std_error(),
                outage_rate_5pct: percentile(&samples, 5.0)?,
                backhaul_rate_per_ap: r.backhaul_rate_per_ap,
            })
        })
        .collect()
}

/// Smallest swept α from which every larger swept α keeps the average rate
/// of `detector` within `fraction` of the baseline. `None` when no α
/// qualifies or there is no baseline.
pub fn alpha_to_reach(reports: &[RateReport], detector: DetectorKind, fraction: f64) -> Option<u32> {
    let base = reports
        .iter()
        .find(|r| r.detector == detector && r.alpha.is_none())?
        .avg_rate();
    let mut sweep: Vec<(u32, f64)> = reports
        .iter()
        .filter(|r| r.detector == detector)
        .filter_map(|r| r.alpha.map(|a| (a, r.avg_rate())))
        .collect();
    sweep.sort_by_key(|s| s.0);
    let mut found = None;
    for &(a, rate) in sweep.iter().rev() {
        if rate >= fraction * base {
            found = Some(a);
        } else {
            break;
        }
    }
    found
}

pub fn find_report(reports: &[RateReport], detector: DetectorKind, alpha: Option<u32>) -> Option<&RateReport> {
    reports.iter().find(|r| r.detector == detector && r.alpha == alpha)
}
