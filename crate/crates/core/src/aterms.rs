//! Brute-force check of the closed-form SINR.
//!
//! Every realization simulates the full chain (channel, pilots, estimation,
//! channel and signal quantization, detection, data symbols, noise) and splits
//! the detector output for user `k` into its six components:
//!
//! ```text
//! v̌_k^H y̌ = ã (T1 + T2 + T3 - T5 + T6) + T4
//! T1 = sqrt(ρ q_k) v̌^H ǧ_k s_k                  desired signal
//! T2 = Σ_{k'≠k} sqrt(ρ q_k') v̌^H ǧ_k' s_k'       multi-user interference
//! T3 = v̌^H n                                    thermal noise
//! T4 = v̌^H e^y                                  signal quantization error
//! T5 = Σ_k' sqrt(ρ q_k') v̌^H e^g_k' s_k'         channel quantization error
//! T6 = Σ_k' sqrt(ρ q_k') v̌^H g̃_k' s_k'           estimation error
//! ```
//!
//! The sample powers of T2..T6 (T4 scaled by `1/ã²`) are compared against the
//! closed-form terms evaluated at the same detector, and all pairwise sample
//! correlations are reported.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::airlink::{
    draw_symbols, estimate_channels, receive_uplink, received_power, sample_channel, PilotBook, UplinkNoise,
};
use crate::detection::{build_detector, build_noise_covariance, DetectorKind, Distortion, Scenario};
use crate::error::{Error, Result};
use crate::fronthaul::{quantize_estimates, quantize_received};
use crate::quantizer::QuantizerDesign;
use crate::geometry::{drop_network, large_scale_fading};
use crate::random::{derive_seed, rng_for};
use crate::simulator::SimConfig;

const CHUNK: usize = 2048;

/// Seed of the fixed drop used by [`TinyInstance::standard`].
pub const TINY_DROP_SEED: u64 = 7;
pub const TERM_NAMES: [&str; 6] = ["A1", "A2", "A3", "A4", "A5", "A6"];

/// Fixed two-AP, two-antenna, two-user network with orthogonal pilots.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub beta: DMatrix<f64>,
    pub pilots: PilotBook,
    pub antennas_per_ap: usize,
    pub pilot_snr: f64,
    pub data_snr: f64,
    pub powers: Vec<f64>,
}

impl TinyInstance {
    /// One drop of the default geometry on a 1 km square, with the default
    /// powers and noise figure.
    pub fn standard() -> Result<Self> {
        let config = SimConfig::default();
        let layout = drop_network(2, 2, 1.0, derive_seed(TINY_DROP_SEED, 0))?;
        let beta = large_scale_fading(&layout, &config.pathloss, config.sigma_sh_db, derive_seed(TINY_DROP_SEED, 1));
        Ok(Self {
            beta,
            pilots: PilotBook::new(2, vec![0, 1])?,
            antennas_per_ap: 2,
            pilot_snr: config.pilot_snr(),
            data_snr: config.data_snr(),
            powers: vec![config.user_power; 2],
        })
    }

    pub fn scenario(&self) -> Scenario<'_> {
        Scenario {
            beta: &self.beta,
            antennas_per_ap: self.antennas_per_ap,
            pilots: &self.pilots,
            pilot_snr: self.pilot_snr,
            data_snr: self.data_snr,
            powers: &self.powers,
        }
    }

    /// Oracle setup with the same bit width on signals and channels.
    pub fn setup(&self, alpha: u32, user: usize) -> Result<OracleSetup<'_>> {
        let design = QuantizerDesign::optimal(alpha)?;
        Ok(OracleSetup {
            scenario: self.scenario(),
            signal: design,
            channel: design,
            user,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleSetup<'a> {
    pub scenario: Scenario<'a>,
    pub signal: QuantizerDesign,
    pub channel: QuantizerDesign,
    pub user: usize,
}

/// Monte Carlo power of one interference term against its closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermComparison {
    pub name: &'static str,
    pub monte_carlo: f64,
    pub closed_form: f64,
    /// Mean of the per-realization difference.
    pub diff_mean: f64,
    /// Standard error of that mean.
    pub diff_se: f64,
}

impl TermComparison {
    pub fn z_score(&self) -> f64 {
        if self.diff_se == 0.0 {
            if self.diff_mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.diff_mean / self.diff_se
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score().abs() <= sigmas
    }
}

#[derive(Debug, Clone)]
pub struct DetectorOracle {
    pub detector: DetectorKind,
    /// `|E{T_i T_j^*}| / sqrt(E|T_i|² E|T_j|²)`.
    pub correlations: [[f64; 6]; 6],
    /// A2..A6.
    pub terms: Vec<TermComparison>,
    /// Ratio of Monte Carlo signal power to Monte Carlo interference power,
    /// both scaled by `1/ã²` as in the closed form.
    pub sinr_monte_carlo: f64,
    /// Same ratio built from closed-form numerators and denominators.
    pub sinr_closed_form: f64,
    /// Largest `|v̌^H y̌ - decomposition|` seen.
    pub identity_residual: f64,
}

impl DetectorOracle {
    pub fn max_correlation(&self) -> (usize, usize, f64) {
        let mut best = (0, 1, 0.0);
        for i in 0..6 {
            for j in i + 1..6 {
                if self.correlations[i][j] > best.2 {
                    best = (i, j, self.correlations[i][j]);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub realizations: usize,
    /// `4/sqrt(n)`.
    pub correlation_threshold: f64,
    /// Sample correlation between received signal entries and their
    /// Bussgang quantization error.
    pub bussgang_input_error: f64,
    /// Sample correlation between quantized channel entries and their Max
    /// quantization error.
    pub max_output_error: f64,
    pub detectors: Vec<DetectorOracle>,
}

#[derive(Clone)]
struct Acc {
    cross: [[Complex64; 6]; 6],
    diff: [f64; 5],
    diff_sq: [f64; 5],
    mc: [f64; 5],
    cf: [f64; 5],
    signal_mc: f64,
    signal_cf: f64,
    residual: f64,
}

impl Acc {
    fn new() -> Self {
        Self {
            cross: [[Complex64::new(0.0, 0.0); 6]; 6],
            diff: [0.0; 5],
            diff_sq: [0.0; 5],
            mc: [0.0; 5],
            cf: [0.0; 5],
            signal_mc: 0.0,
            signal_cf: 0.0,
            residual: 0.0,
        }
    }

    fn merge(&mut self, o: &Acc) {
        for i in 0..6 {
            for j in 0..6 {
                self.cross[i][j] += o.cross[i][j];
            }
        }
        for i in 0..5 {
            self.diff[i] += o.diff[i];
            self.diff_sq[i] += o.diff_sq[i];
            self.mc[i] += o.mc[i];
            self.cf[i] += o.cf[i];
        }
        self.signal_mc += o.signal_mc;
        self.signal_cf += o.signal_cf;
        self.residual = self.residual.max(o.residual);
    }
}

#[derive(Clone)]
struct ChunkAcc {
    per_detector: Vec<Acc>,
    y_err: Complex64,
    y_pow: f64,
    ey_pow: f64,
    g_err: Complex64,
    g_pow: f64,
    eg_pow: f64,
}

fn column_sq_norm_per_ap(v: &DVector<Complex64>, n_ant: usize) -> Vec<f64> {
    v.as_slice().chunks(n_ant).map(|c| c.iter().map(|x| x.norm_sqr()).sum()).collect()
}

fn run_chunk(setup: &OracleSetup<'_>, detectors: &[DetectorKind], range: std::ops::Range<usize>, seed: u64) -> Result<ChunkAcc> {
    let sc = &setup.scenario;
    let k = setup.user;
    let n_ant = sc.antennas_per_ap;
    let (num_aps, num_users) = sc.beta.shape();
    let rho = sc.data_snr;
    let q = sc.powers;
    let dist = Distortion::from_designs(&setup.signal, &setup.channel);
    let a = dist.a_tilde;
    let p_bar = received_power(sc.beta, q, rho);
    let mut out = ChunkAcc {
        per_detector: vec![Acc::new(); detectors.len()],
        y_err: Complex64::new(0.0, 0.0),
        y_pow: 0.0,
        ey_pow: 0.0,
        g_err: Complex64::new(0.0, 0.0),
        g_pow: 0.0,
        eg_pow: 0.0,
    };
    for r in range {
        let mut rng = rng_for(seed, r as u64);
        let state = sample_channel(sc.beta, n_ant, &mut rng)?;
        let est = estimate_channels(&state, sc.beta, sc.pilots, sc.pilot_snr, &mut rng)?;
        let qe = quantize_estimates(&est, &setup.channel)?;
        let g_check = &qe.g_check;
        let e_g = g_check - &est.g_hat;
        let g_tilde = &state.g - &est.g_hat;
        let s = draw_symbols(num_users, &mut rng);
        let y = receive_uplink(&state, q, rho, &s, UplinkNoise::Enabled, &mut rng)?;
        let noise = &y - &state.g * DVector::from_fn(num_users, |i, _| s[i] * (rho * q[i]).sqrt());
        let qs = quantize_received(&y, sc.beta, q, rho, &setup.signal)?;
        let e_y = &qs.y_check - &y * Complex64::new(a, 0.0);

        out.y_err += y.dotc(&e_y);
        out.y_pow += y.norm_squared();
        out.ey_pow += e_y.norm_squared();
        for (gc, eg) in g_check.iter().zip(e_g.iter()) {
            out.g_err += gc.conj() * eg;
            out.g_pow += gc.norm_sqr();
            out.eg_pow += eg.norm_sqr();
        }

        let cov = build_noise_covariance(sc.beta, &est.gamma, q, rho, n_ant, &dist)?;
        let weighted = |mat: &DMatrix<Complex64>, v: &DVector<Complex64>| -> Complex64 {
            (0..num_users)
                .map(|kp| v.dotc(&mat.column(kp)) * s[kp] * (rho * q[kp]).sqrt())
                .sum()
        };
        for (acc, &kind) in out.per_detector.iter_mut().zip(detectors) {
            let vmat = build_detector(kind, g_check, &cov.diag, q, rho, a)?;
            let v = vmat.column(k).clone_owned();
            let inner: Vec<Complex64> = (0..num_users).map(|kp| v.dotc(&g_check.column(kp))).collect();
            let t1 = inner[k] * s[k] * (rho * q[k]).sqrt();
            let t2: Complex64 = (0..num_users)
                .filter(|&kp| kp != k)
                .map(|kp| inner[kp] * s[kp] * (rho * q[kp]).sqrt())
                .sum();
            let t3 = v.dotc(&noise);
            let t4 = v.dotc(&e_y);
            let t5 = weighted(&e_g, &v);
            let t6 = weighted(&g_tilde, &v);
            let terms = [t1, t2, t3, t4, t5, t6];

            let direct = v.dotc(&qs.y_check);
            let rebuilt = (t1 + t2 + t3 - t5 + t6) * a + t4;
            acc.residual = acc.residual.max((direct - rebuilt).norm() / direct.norm().max(1.0));

            let ap_norm = column_sq_norm_per_ap(&v, n_ant);
            let closed = [
                (0..num_users)
                    .filter(|&kp| kp != k)
                    .map(|kp| rho * q[kp] * inner[kp].norm_sqr())
                    .sum::<f64>(),
                ap_norm.iter().sum::<f64>(),
                dist.var_y / (a * a) * (0..num_aps).map(|m| ap_norm[m] * p_bar[m]).sum::<f64>(),
                rho * dist.var_g
                    * (0..num_aps)
                        .map(|m| ap_norm[m] * (0..num_users).map(|kp| q[kp] * est.gamma[(m, kp)]).sum::<f64>())
                        .sum::<f64>(),
                rho * (0..num_aps)
                    .map(|m| {
                        ap_norm[m]
                            * (0..num_users)
                                .map(|kp| q[kp] * (sc.beta[(m, kp)] - est.gamma[(m, kp)]))
                                .sum::<f64>()
                    })
                    .sum::<f64>(),
            ];
            let realized = [
                t2.norm_sqr(),
                t3.norm_sqr(),
                t4.norm_sqr() / (a * a),
                t5.norm_sqr(),
                t6.norm_sqr(),
            ];
            for i in 0..5 {
                let d = realized[i] - closed[i];
                acc.diff[i] += d;
                acc.diff_sq[i] += d * d;
                acc.mc[i] += realized[i];
                acc.cf[i] += closed[i];
            }
            acc.signal_mc += t1.norm_sqr();
            acc.signal_cf += rho * q[k] * inner[k].norm_sqr();
            for i in 0..6 {
                for j in 0..6 {
                    acc.cross[i][j] += terms[i] * terms[j].conj();
                }
            }
        }
    }
    Ok(out)
}

fn finish(acc: &Acc, n: usize, detector: DetectorKind) -> DetectorOracle {
    let nf = n as f64;
    let mut correlations = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let denom = (acc.cross[i][i].re * acc.cross[j][j].re).sqrt();
            correlations[i][j] = if denom > 0.0 { acc.cross[i][j].norm() / denom } else { 0.0 };
        }
    }
    let terms = (0..5)
        .map(|i| {
            let mean = acc.diff[i] / nf;
            let var = (acc.diff_sq[i] / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
            TermComparison {
                name: TERM_NAMES[i + 1],
                monte_carlo: acc.mc[i] / nf,
                closed_form: acc.cf[i] / nf,
                diff_mean: mean,
                diff_se: (var / nf).sqrt(),
            }
        })
        .collect();
    DetectorOracle {
        detector,
        correlations,
        terms,
        sinr_monte_carlo: acc.signal_mc / acc.mc.iter().sum::<f64>(),
        sinr_closed_form: acc.signal_cf / acc.cf.iter().sum::<f64>(),
        identity_residual: acc.residual,
    }
}

/// Run `realizations` independent end-to-end draws. Results depend only on
/// `seed`, not on the thread count.
pub fn run_oracle(
    setup: &OracleSetup<'_>,
    detectors: &[DetectorKind],
    realizations: usize,
    seed: u64,
) -> Result<OracleReport> {
    if realizations < 2 {
        return Err(Error::InvalidArgument("need at least two realizations".into()));
    }
    if setup.user >= setup.scenario.beta.ncols() {
        return Err(Error::InvalidArgument(format!("user {} out of range", setup.user)));
    }
    let chunks: Vec<_> = (0..realizations)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(realizations))
        .collect();
    let partial: Vec<ChunkAcc> = chunks
        .into_par_iter()
        .map(|range| run_chunk(setup, detectors, range, seed))
        .collect::<Result<_>>()?;
    let mut total = partial[0].clone();
    for p in &partial[1..] {
        for (a, b) in total.per_detector.iter_mut().zip(&p.per_detector) {
            a.merge(b);
        }
        total.y_err += p.y_err;
        total.y_pow += p.y_pow;
        total.ey_pow += p.ey_pow;
        total.g_err += p.g_err;
        total.g_pow += p.g_pow;
        total.eg_pow += p.eg_pow;
    }
    Ok(OracleReport {
        realizations,
        correlation_threshold: 4.0 / (realizations as f64).sqrt(),
        bussgang_input_error: total.y_err.norm() / (total.y_pow * total.ey_pow).sqrt(),
        max_output_error: total.g_err.norm() / (total.g_pow * total.eg_pow).sqrt(),
        detectors: total
            .per_detector
            .iter()
            .zip(detectors)
            .map(|(acc, &kind)| finish(acc, realizations, kind))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_instance_is_fixed() {
        let a = TinyInstance::standard().unwrap();
        let b = TinyInstance::standard().unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.beta.shape(), (2, 2));
        assert!(a.beta.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn decomposition_identity_and_exact_terms() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 0.8]);
        let book = PilotBook::new(2, vec![0, 1]).unwrap();
        let q = [1.0, 1.0];
        let setup = OracleSetup {
            scenario: Scenario {
                beta: &beta,
                antennas_per_ap: 2,
                pilots: &book,
                pilot_snr: 1.0,
                data_snr: 1.0,
                powers: &q,
            },
            signal: QuantizerDesign::optimal(3).unwrap(),
            channel: QuantizerDesign::optimal(3).unwrap(),
            user: 0,
        };
        let report = run_oracle(&setup, &DetectorKind::ALL, 20_000, 9).unwrap();
        for d in &report.detectors {
            assert!(d.identity_residual < 1e-10);
            // Interference, noise and estimation-error terms have exact
            // conditional expectations given the detector.
            for i in [0usize, 1, 4] {
                assert!(d.terms[i].within(4.0), "{} {:?}", d.detector, d.terms[i]);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let beta = DMatrix::from_element(1, 1, 1.0);
        let book = PilotBook::new(1, vec![0]).unwrap();
        let setup = OracleSetup {
            scenario: Scenario {
                beta: &beta,
                antennas_per_ap: 1,
                pilots: &book,
                pilot_snr: 1.0,
                data_snr: 1.0,
                powers: &[1.0],
            },
            signal: QuantizerDesign::optimal(2).unwrap(),
            channel: QuantizerDesign::optimal(2).unwrap(),
            user: 3,
        };
        assert!(run_oracle(&setup, &[DetectorKind::Mrc], 10, 0).is_err());
        let ok = OracleSetup { user: 0, ..setup };
        assert!(run_oracle(&ok, &[DetectorKind::Mrc], 1, 0).is_err());
    }
}
