use cellfree::quantizer::{quantize_sample, QuantizerDesign};
use cellfree::random::SimRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn gaussian_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
}

/// `∫ f(z) φ(z) dz`, split at the cell boundaries so every piece is smooth.
fn expect(design: &QuantizerDesign, f: impl Fn(f64, f64) -> f64) -> f64 {
    let half = (design.levels() / 2) as i64;
    let mut cuts = vec![-12.0];
    for k in (1 - half)..half {
        let c = k as f64 * design.delta;
        if c > -12.0 && c < 12.0 {
            cuts.push(c);
        }
    }
    cuts.push(12.0);
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let level = quantize_sample(mid, design).unwrap();
            let g = |z: f64| f(z, level) * pdf(z);
            adaptive(&g, w[0], w[1], simpson(&g, w[0], w[1]), 1e-14, 40)
        })
        .sum()
}

#[test]
fn moments_match_quadrature() {
    for alpha in 1..=9 {
        let d = QuantizerDesign::optimal(alpha).unwrap();
        let a = expect(&d, |z, q| z * q);
        let b = expect(&d, |_, q| q * q);
        let mse = expect(&d, |z, q| (q - z) * (q - z));
        assert!((a - d.a_tilde).abs() < 1e-8, "alpha {alpha}: {a} vs {}", d.a_tilde);
        assert!((b - d.b_tilde).abs() < 1e-8, "alpha {alpha}");
        assert!((b - a * a - d.var_bussgang).abs() < 1e-8, "alpha {alpha}");
        if alpha <= 5 {
            assert!((mse - d.var_max).abs() < 1e-8, "alpha {alpha}");
        }
    }
}

#[test]
fn bussgang_and_max_remarks_hold_for_gaussian_input() {
    let n = 1_000_000;
    let z = gaussian_samples(n, 1);
    let threshold = 4.0 / (n as f64).sqrt();
    for alpha in 1..=5 {
        let d = QuantizerDesign::optimal(alpha).unwrap();
        let q: Vec<f64> = z.iter().map(|&x| quantize_sample(x, &d).unwrap()).collect();
        let corr = |u: &dyn Fn(usize) -> f64, v: &dyn Fn(usize) -> f64| {
            let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
            for i in 0..n {
                uv += u(i) * v(i);
                uu += u(i) * u(i);
                vv += v(i) * v(i);
            }
            uv / (uu * vv).sqrt()
        };
        let input_error = corr(&|i| z[i], &|i| q[i] - d.a_tilde * z[i]);
        let output_error = corr(&|i| q[i], &|i| q[i] - z[i]);
        assert!(input_error.abs() < threshold, "alpha {alpha}: {input_error}");
        assert!(output_error.abs() < threshold, "alpha {alpha}: {output_error}");
    }
}

#[test]
fn sdnr_matches_monte_carlo() {
    let n = 10_000_000;
    let z = gaussian_samples(n, 2);
    for alpha in 1..=4 {
        let d = QuantizerDesign::optimal(alpha).unwrap();
        let (mut s1, mut s2) = (0.0, 0.0);
        let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for &x in &z {
            let q = quantize_sample(x, &d).unwrap();
            let e = (q - d.a_tilde * x).powi(2);
            s1 += e;
            s2 += e * e;
            a1 += x * q;
            a2 += (x * q).powi(2);
            b1 += q * q;
            b2 += q.powi(4);
        }
        let nf = n as f64;
        let mean_se = |s: f64, sq: f64| (s / nf, ((sq / nf - (s / nf).powi(2)).max(0.0) / nf).sqrt());
        let (var, var_se) = mean_se(s1, s2);
        let (a, a_se) = mean_se(a1, a2);
        let (b, b_se) = mean_se(b1, b2);
        assert!((var - d.var_bussgang).abs() < 4.0 * var_se, "alpha {alpha}");
        assert!((a - d.a_tilde).abs() < 4.0 * a_se, "alpha {alpha}");
        // One-bit outputs have constant magnitude, so b̃ is exact up to the
        // rounding of a 10⁷-term sum.
        assert!((b - d.b_tilde).abs() < 4.0 * b_se + 1e-8, "alpha {alpha}: {b} vs {} se {b_se}", d.b_tilde);
        // SDNR from the distortion sequence; its standard error follows from
        // that of the variance.
        let sdnr = d.a_tilde * d.a_tilde / var;
        assert!((sdnr - d.sdnr()).abs() < 4.0 * sdnr * var_se / var, "alpha {alpha}");
    }
}

#[test]
fn brute_force_grid_finds_two_bit_step() {
    // Sample MSE on a grid of steps, evaluated in O(n log n + G·L) with sorted
    // samples and prefix sums of z and z².
    let n = 1_000_000;
    let mut z = gaussian_samples(n, 3);
    z.sort_by(f64::total_cmp);
    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    for i in 0..n {
        p1[i + 1] = p1[i] + z[i];
        p2[i + 1] = p2[i] + z[i] * z[i];
    }
    let idx = |t: f64| z.partition_point(|&x| x < t);
    let mse = |delta: f64| {
        // Four cells with edges at -Δ, 0, Δ and levels ±Δ/2, ±3Δ/2.
        let edges = [0, idx(-delta), idx(0.0), idx(delta), n];
        let levels = [-1.5 * delta, -0.5 * delta, 0.5 * delta, 1.5 * delta];
        let mut total = 0.0;
        for c in 0..4 {
            let (i, j) = (edges[c], edges[c + 1]);
            let cnt = (j - i) as f64;
            let s1 = p1[j] - p1[i];
            let s2 = p2[j] - p2[i];
            total += s2 - 2.0 * levels[c] * s1 + cnt * levels[c] * levels[c];
        }
        total / n as f64
    };
    let grid: Vec<f64> = (0..=4000).map(|i| 0.8 + i as f64 * 1e-4).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| mse(*a).total_cmp(&mse(*b)))
        .unwrap();
    let d = QuantizerDesign::optimal(2).unwrap();
    assert!((best - d.delta).abs() < 0.005, "{best} vs {}", d.delta);
}
