use cellfree::airlink::{estimate_channels, estimation_coefficients, sample_channel, PilotBook};
use cellfree::random::SimRng;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;

fn setup() -> (DMatrix<f64>, PilotBook) {
    // Users 0 and 2 share a pilot.
    let beta = DMatrix::from_row_slice(2, 3, &[1.0, 0.4, 0.25, 0.1, 2.0, 0.7]);
    (beta, PilotBook::new(2, vec![0, 1, 0]).unwrap())
}

struct Moments {
    est_power: DMatrix<f64>,
    err_power: DMatrix<f64>,
    cross: DMatrix<Complex64>,
    n: f64,
}

fn simulate(beta: &DMatrix<f64>, book: &PilotBook, pilot_snr: f64, draws: usize, seed: u64) -> Moments {
    let (m, k) = beta.shape();
    let n_ant = 2;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut est_power = DMatrix::zeros(m, k);
    let mut err_power = DMatrix::zeros(m, k);
    let mut cross = DMatrix::from_element(m, k, Complex64::new(0.0, 0.0));
    for _ in 0..draws {
        let state = sample_channel(beta, n_ant, &mut rng).unwrap();
        let est = estimate_channels(&state, beta, book, pilot_snr, &mut rng).unwrap();
        for row in 0..m * n_ant {
            for u in 0..k {
                let g_hat = est.g_hat[(row, u)];
                let err = state.g[(row, u)] - g_hat;
                est_power[(row / n_ant, u)] += g_hat.norm_sqr();
                err_power[(row / n_ant, u)] += err.norm_sqr();
                cross[(row / n_ant, u)] += g_hat.conj() * err;
            }
        }
    }
    Moments {
        est_power,
        err_power,
        cross,
        n: (draws * n_ant) as f64,
    }
}

#[test]
fn estimate_and_error_powers() {
    let (beta, book) = setup();
    let pilot_snr = 3.0;
    let (_, gamma) = estimation_coefficients(&beta, &book, pilot_snr);
    let mo = simulate(&beta, &book, pilot_snr, 40_000, 1);
    for m in 0..2 {
        for k in 0..3 {
            let est = mo.est_power[(m, k)] / mo.n;
            let err = mo.err_power[(m, k)] / mo.n;
            assert!((est / gamma[(m, k)] - 1.0).abs() < 0.02, "({m},{k}) {est} vs {}", gamma[(m, k)]);
            let expected_err = beta[(m, k)] - gamma[(m, k)];
            assert!((err / expected_err - 1.0).abs() < 0.02, "({m},{k}) {err} vs {expected_err}");
        }
    }
}

#[test]
fn estimate_is_orthogonal_to_error() {
    let (beta, book) = setup();
    let mo = simulate(&beta, &book, 3.0, 40_000, 2);
    for m in 0..2 {
        for k in 0..3 {
            // |E{ĝ* ε}| relative to sqrt(E|ĝ|² E|ε|²), sampled over n entries.
            let c = mo.cross[(m, k)].norm() / (mo.est_power[(m, k)] * mo.err_power[(m, k)]).sqrt();
            assert!(c < 4.0 / mo.n.sqrt(), "({m},{k}) {c}");
        }
    }
}

#[test]
fn gamma_identity() {
    let (beta, book) = setup();
    let pilot_snr = 5.0;
    let tau_p = book.tau_p() as f64;
    let (c, gamma) = estimation_coefficients(&beta, &book, pilot_snr);
    for m in 0..2 {
        for k in 0..3 {
            let contamination: f64 = (0..3).map(|j| beta[(m, j)] * book.overlap(k, j)).sum();
            let c_ref = (tau_p * pilot_snr).sqrt() * beta[(m, k)] / (tau_p * pilot_snr * contamination + 1.0);
            let g_ref = (tau_p * pilot_snr).sqrt() * beta[(m, k)] * c_ref;
            assert!((c[(m, k)] - c_ref).abs() < 1e-14);
            assert!((gamma[(m, k)] - g_ref).abs() < 1e-14);
            assert!(gamma[(m, k)] < beta[(m, k)]);
        }
    }
}

#[test]
fn contaminated_estimates_are_parallel() {
    let (beta, book) = setup();
    let mut rng = SimRng::seed_from_u64(3);
    let state = sample_channel(&beta, 2, &mut rng).unwrap();
    let est = estimate_channels(&state, &beta, &book, 2.0, &mut rng).unwrap();
    for row in 0..4 {
        let m = row / 2;
        let lhs = est.g_hat[(row, 0)] / est.c[(m, 0)];
        let rhs = est.g_hat[(row, 2)] / est.c[(m, 2)];
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        // The user on its own pilot is not parallel to them.
        let other = est.g_hat[(row, 1)] / est.c[(m, 1)];
        assert!((other - lhs).norm() > 1e-6);
    }
}

#[test]
fn strong_pilots_recover_large_scale_fading() {
    let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 0.8]);
    let book = PilotBook::new(2, vec![0, 1]).unwrap();
    let (_, gamma) = estimation_coefficients(&beta, &book, 1e9);
    for (g, b) in gamma.iter().zip(beta.iter()) {
        assert!((g / b - 1.0).abs() < 1e-8);
    }
    let mut rng = SimRng::seed_from_u64(4);
    let state = sample_channel(&beta, 3, &mut rng).unwrap();
    let est = estimate_channels(&state, &beta, &book, 1e12, &mut rng).unwrap();
    assert!((&est.g_hat - &state.g).norm() < 1e-5 * state.g.norm());
}
