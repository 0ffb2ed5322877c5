//! Network drops on a wrapped square and large-scale fading.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOLTZMANN: f64 = 1.381e-23;
pub const NOISE_TEMPERATURE_K: f64 = 290.0;

/// AP-user distances below this are clamped before path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// AP and user positions in meters on `[0, side)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub side_km: f64,
    pub aps: Vec<Point>,
    pub users: Vec<Point>,
}

impl Layout {
    pub fn side_m(&self) -> f64 {
        self.side_km * 1000.0
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// M×K matrix of wrapped AP-user distances.
    pub fn distances(&self) -> DMatrix<f64> {
        let side = self.side_m();
        DMatrix::from_fn(self.aps.len(), self.users.len(), |m, k| {
            wrapped_distance(self.aps[m], self.users[k], side)
        })
    }

    /// Shift every position by `(dx, dy)` modulo the side length.
    pub fn translated(&self, dx: f64, dy: f64) -> Layout {
        let side = self.side_m();
        let shift = |p: &Point| Point::new((p.x + dx).rem_euclid(side), (p.y + dy).rem_euclid(side));
        Layout {
            side_km: self.side_km,
            aps: self.aps.iter().map(shift).collect(),
            users: self.users.iter().map(shift).collect(),
        }
    }
}

/// A layout together with its M×K large-scale fading matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDrop {
    pub layout: Layout,
    pub beta: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct DropFile {
    side_km: f64,
    aps: Vec<Point>,
    users: Vec<Point>,
    /// Row-major, one row per AP.
    beta: Vec<Vec<f64>>,
}

impl NetworkDrop {
    pub fn new(layout: Layout, beta: DMatrix<f64>) -> Result<Self> {
        if beta.nrows() != layout.num_aps() || beta.ncols() != layout.num_users() {
            return Err(Error::Dimension(format!(
                "beta is {}x{} but the layout has {} APs and {} users",
                beta.nrows(),
                beta.ncols(),
                layout.num_aps(),
                layout.num_users()
            )));
        }
        if let Some(bad) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "large-scale fading must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { layout, beta })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DropFile {
            side_km: self.layout.side_km,
            aps: self.layout.aps.clone(),
            users: self.layout.users.clone(),
            beta: self
                .beta
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DropFile = serde_json::from_str(s)?;
        let rows = file.beta.len();
        let cols = file.beta.first().map_or(0, Vec::len);
        if file.beta.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged beta rows".into()));
        }
        let beta = DMatrix::from_fn(rows, cols, |m, k| file.beta[m][k]);
        NetworkDrop::new(
            Layout {
                side_km: file.side_km,
                aps: file.aps,
                users: file.users,
            },
            beta,
        )
    }
}

/// Path-loss law returning a linear power gain (< 1) for a distance in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathLossModel {
    /// Three-slope model: 35 dB/decade beyond `d1_m`, 20 dB/decade between
    /// `d0_m` and `d1_m`, flat below `d0_m`. The fixed loss defaults to the
    /// COST-231 Hata constant for the given carrier and antenna heights.
    ThreeSlope {
        carrier_mhz: f64,
        ap_height_m: f64,
        user_height_m: f64,
        d0_m: f64,
        d1_m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixed_loss_db: Option<f64>,
    },
    /// `reference_loss_db + 10·exponent·log10(d/reference_m)`, flat below the
    /// reference distance.
    LogDistance {
        reference_loss_db: f64,
        exponent: f64,
        reference_m: f64,
    },
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::ThreeSlope {
            carrier_mhz: 1900.0,
            ap_height_m: 15.0,
            user_height_m: 1.65,
            d0_m: 10.0,
            d1_m: 50.0,
            fixed_loss_db: None,
        }
    }
}

/// COST-231 Hata constant loss in dB.
pub fn hata_cost231_loss_db(carrier_mhz: f64, ap_height_m: f64, user_height_m: f64) -> f64 {
    let lf = carrier_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * ap_height_m.log10() - (1.1 * lf - 0.7) * user_height_m + (1.56 * lf - 0.8)
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("pathloss: {what}")));
        match *self {
            PathLossModel::ThreeSlope {
                carrier_mhz,
                ap_height_m,
                user_height_m,
                d0_m,
                d1_m,
                fixed_loss_db,
            } => {
                if !(carrier_mhz > 0.0 && ap_height_m > 0.0 && user_height_m > 0.0) {
                    return bad("carrier and antenna heights must be positive");
                }
                if !(d0_m > 0.0 && d1_m > d0_m) {
                    return bad("breakpoints must satisfy 0 < d0_m < d1_m");
                }
                if fixed_loss_db.is_some_and(|l| !l.is_finite()) {
                    return bad("fixed_loss_db must be finite");
                }
            }
            PathLossModel::LogDistance {
                reference_loss_db,
                exponent,
                reference_m,
            } => {
                if !(reference_loss_db.is_finite() && exponent >= 0.0 && reference_m > 0.0) {
                    return bad("log-distance needs finite loss, exponent >= 0, reference_m > 0");
                }
            }
        }
        Ok(())
    }

    /// Path loss in dB (a non-positive gain) at `distance_m`.
    pub fn gain_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(MIN_DISTANCE_M);
        match *self {
            PathLossModel::ThreeSlope {
                carrier_mhz,
                ap_height_m,
                user_height_m,
                d0_m,
                d1_m,
                fixed_loss_db,
            } => {
                let loss = fixed_loss_db
                    .unwrap_or_else(|| hata_cost231_loss_db(carrier_mhz, ap_height_m, user_height_m));
                // Distances in km inside the logarithms.
                let km = |x: f64| (x / 1000.0).log10();
                if d > d1_m {
                    -loss - 35.0 * km(d)
                } else if d > d0_m {
                    -loss - 15.0 * km(d1_m) - 20.0 * km(d)
                } else {
                    -loss - 15.0 * km(d1_m) - 20.0 * km(d0_m)
                }
            }
            PathLossModel::LogDistance {
                reference_loss_db,
                exponent,
                reference_m,
            } => -reference_loss_db - 10.0 * exponent * (d.max(reference_m) / reference_m).log10(),
        }
    }

    pub fn gain(&self, distance_m: f64) -> f64 {
        10f64.powf(self.gain_db(distance_m) / 10.0)
    }
}

/// Torus distance on a square of side `side_m`.
pub fn wrapped_distance(p: Point, q: Point, side_m: f64) -> f64 {
    let dx = (p.x - q.x).abs().rem_euclid(side_m);
    let dy = (p.y - q.y).abs().rem_euclid(side_m);
    dx.min(side_m - dx).hypot(dy.min(side_m - dy))
}

fn uniform_points(n: usize, side_m: f64, rng: &mut impl Rng) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random::<f64>() * side_m, rng.random::<f64>() * side_m))
        .collect()
}

/// Independent uniform placement of `num_aps` APs and `num_users` users.
pub fn drop_network(num_aps: usize, num_users: usize, side_km: f64, seed: u64) -> Result<Layout> {
    if num_aps == 0 || num_users == 0 {
        return Err(Error::InvalidArgument("need at least one AP and one user".into()));
    }
    if !(side_km.is_finite() && side_km > 0.0) {
        return Err(Error::InvalidArgument(format!("side length must be positive, got {side_km}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = side_km * 1000.0;
    let aps = uniform_points(num_aps, side, &mut rng);
    let users = uniform_points(num_users, side, &mut rng);
    Ok(Layout { side_km, aps, users })
}

/// `β_mk = PL_mk · 10^(σ_sh z_mk / 10)` with i.i.d. standard normal `z_mk`.
pub fn large_scale_fading(layout: &Layout, model: &PathLossModel, sigma_sh_db: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = layout.distances();
    // Column-major fill: user by user.
    DMatrix::from_fn(dist.nrows(), dist.ncols(), |m, k| {
        let z: f64 = rng.sample(StandardNormal);
        let pl_db = model.gain_db(dist[(m, k)]);
        if sigma_sh_db == 0.0 {
            10f64.powf(pl_db / 10.0)
        } else {
            10f64.powf((pl_db + sigma_sh_db * z) / 10.0)
        }
    })
}

/// Thermal noise power `BW · k_B · T_0 · 10^(NF/10)` in watts.
pub fn noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    bandwidth_hz * BOLTZMANN * NOISE_TEMPERATURE_K * 10f64.powf(noise_figure_db / 10.0)
}

/// Transmit power normalized by the noise power.
pub fn normalize_power(power_w: f64, noise_w: f64) -> f64 {
    power_w / noise_w
}
