//! Small-scale channels, pilots, MMSE channel estimation and the uplink
//! received signal.
//!
//! Channel matrices are `MN × K`: AP `m`, antenna `n` sits on row `m·N + n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::random::complex_normal;

/// Pilot sequences as columns of the `τ_p × τ_p` identity; user `k` sends
/// column `assignment[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotBook {
    tau_p: usize,
    assignment: Vec<usize>,
}

impl PilotBook {
    pub fn new(tau_p: usize, assignment: Vec<usize>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::InvalidArgument("pilot length must be positive".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= tau_p) {
            return Err(Error::InvalidArgument(format!(
                "pilot index {bad} out of range for tau_p = {tau_p}"
            )));
        }
        Ok(Self { tau_p, assignment })
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `|φ_{k'}^H φ_k|²`, which is 0 or 1 for this construction.
    pub fn overlap(&self, k: usize, k_prime: usize) -> f64 {
        if self.assignment[k] == self.assignment[k_prime] {
            1.0
        } else {
            0.0
        }
    }

    /// The `τ_p × K` pilot matrix Φ.
    pub fn phi(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.tau_p, self.assignment.len(), |t, k| {
            if self.assignment[k] == t {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Distinct sequences when `τ_p ≥ K`, otherwise an independent uniform draw
/// per user.
pub fn build_pilot_book(num_users: usize, tau_p: usize, rng: &mut impl Rng) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(Error::InvalidArgument("pilot length must be positive".into()));
    }
    let assignment = if tau_p >= num_users {
        (0..num_users).collect()
    } else {
        (0..num_users).map(|_| rng.random_range(0..tau_p)).collect()
    };
    PilotBook::new(tau_p, assignment)
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    pub antennas_per_ap: usize,
    /// Unit-variance small-scale coefficients.
    pub h: DMatrix<Complex64>,
    /// `g_mk = sqrt(β_mk) h_mk`.
    pub g: DMatrix<Complex64>,
}

impl ChannelState {
    pub fn num_aps(&self) -> usize {
        self.g.nrows() / self.antennas_per_ap
    }

    pub fn num_users(&self) -> usize {
        self.g.ncols()
    }
}

fn check_beta(beta: &DMatrix<f64>) -> Result<()> {
    if beta.is_empty() {
        return Err(Error::Empty("large-scale fading matrix"));
    }
    if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {b}")));
    }
    Ok(())
}

/// Draw i.i.d. Rayleigh fading for an `M × K` large-scale matrix and `N`
/// antennas per AP.
pub fn sample_channel(beta: &DMatrix<f64>, antennas_per_ap: usize, rng: &mut impl Rng) -> Result<ChannelState> {
    check_beta(beta)?;
    if antennas_per_ap == 0 {
        return Err(Error::InvalidArgument("need at least one antenna per AP".into()));
    }
    let (m, k) = beta.shape();
    let h = DMatrix::from_fn(m * antennas_per_ap, k, |_, _| complex_normal(rng));
    let g = DMatrix::from_fn(m * antennas_per_ap, k, |row, col| {
        h[(row, col)] * beta[(row / antennas_per_ap, col)].sqrt()
    });
    Ok(ChannelState {
        antennas_per_ap,
        h,
        g,
    })
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub antennas_per_ap: usize,
    pub g_hat: DMatrix<Complex64>,
    /// M×K estimation coefficients `c_mk`.
    pub c: DMatrix<f64>,
    /// M×K per-entry mean squares `γ_mk` of the estimate.
    pub gamma: DMatrix<f64>,
}

/// `c_mk` and `γ_mk` for normalized pilot power `pilot_snr`.
pub fn estimation_coefficients(beta: &DMatrix<f64>, book: &PilotBook, pilot_snr: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (num_aps, num_users) = beta.shape();
    let tp = book.tau_p() as f64 * pilot_snr;
    let sq = tp.sqrt();
    let c = DMatrix::from_fn(num_aps, num_users, |m, k| {
        let contamination: f64 = (0..num_users).map(|kp| beta[(m, kp)] * book.overlap(kp, k)).sum();
        sq * beta[(m, k)] / (tp * contamination + 1.0)
    });
    let gamma = DMatrix::from_fn(num_aps, num_users, |m, k| sq * beta[(m, k)] * c[(m, k)]);
    (c, gamma)
}

/// MMSE estimate from the de-spread pilot observation. Users that share a
/// sequence also share its noise, so their estimates are parallel.
pub fn estimate_channels(
    state: &ChannelState,
    beta: &DMatrix<f64>,
    book: &PilotBook,
    pilot_snr: f64,
    rng: &mut impl Rng,
) -> Result<ChannelEstimate> {
    let (num_aps, num_users) = beta.shape();
    let n_ant = state.antennas_per_ap;
    if state.g.shape() != (num_aps * n_ant, num_users) || book.num_users() != num_users {
        return Err(Error::Dimension(format!(
            "channel {:?}, beta {:?}, pilot book for {} users",
            state.g.shape(),
            beta.shape(),
            book.num_users()
        )));
    }
    if !(pilot_snr.is_finite() && pilot_snr > 0.0) {
        return Err(Error::InvalidArgument(format!("pilot SNR must be positive, got {pilot_snr}")));
    }
    let (c, gamma) = estimation_coefficients(beta, book, pilot_snr);
    let sq = (book.tau_p() as f64 * pilot_snr).sqrt();
    let tau_p = book.tau_p();
    let mut g_hat = DMatrix::zeros(num_aps * n_ant, num_users);
    let mut projection = vec![Complex64::new(0.0, 0.0); tau_p];
    for m in 0..num_aps {
        for n in 0..n_ant {
            let row = m * n_ant + n;
            // Noise of each de-spread sequence, Ω_{p,m} φ.
            for p in projection.iter_mut() {
                *p = complex_normal(rng);
            }
            for (k, &seq) in book.assignment().iter().enumerate() {
                projection[seq] += state.g[(row, k)] * sq;
            }
            for (k, &seq) in book.assignment().iter().enumerate() {
                g_hat[(row, k)] = projection[seq] * c[(m, k)];
            }
        }
    }
    Ok(ChannelEstimate {
        antennas_per_ap: n_ant,
        g_hat,
        c,
        gamma,
    })
}

/// Whether receiver noise is added to the uplink signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UplinkNoise {
    Enabled,
    /// Test hook for deterministic pipelines.
    Disabled,
}

/// Unit-power circularly-symmetric Gaussian data symbols.
pub fn draw_symbols(num_users: usize, rng: &mut impl Rng) -> DVector<Complex64> {
    DVector::from_fn(num_users, |_, _| complex_normal(rng))
}

/// `y = sqrt(ρ) Σ_k g_k sqrt(q_k) s_k + n` for one channel use.
pub fn receive_uplink(
    state: &ChannelState,
    powers: &[f64],
    rho: f64,
    symbols: &DVector<Complex64>,
    noise: UplinkNoise,
    rng: &mut impl Rng,
) -> Result<DVector<Complex64>> {
    let k = state.num_users();
    if powers.len() != k || symbols.len() != k {
        return Err(Error::Dimension(format!(
            "{} users but {} powers and {} symbols",
            k,
            powers.len(),
            symbols.len()
        )));
    }
    if powers.iter().any(|q| !(*q >= 0.0)) || !(rho >= 0.0) {
        return Err(Error::InvalidArgument("powers must be nonnegative".into()));
    }
    let tx = DVector::from_fn(k, |i, _| symbols[i] * (rho * powers[i]).sqrt());
    let mut y = &state.g * tx;
    if noise == UplinkNoise::Enabled {
        for v in y.iter_mut() {
            *v += complex_normal(rng);
        }
    }
    Ok(y)
}

/// Analytical per-entry power of AP `m`'s received signal,
/// `ρ Σ_k β_mk q_k + 1`.
pub fn received_power(beta: &DMatrix<f64>, powers: &[f64], rho: f64) -> Vec<f64> {
    beta.row_iter()
        .map(|row| rho * row.iter().zip(powers).map(|(b, q)| b * q).sum::<f64>() + 1.0)
        .collect()
}
