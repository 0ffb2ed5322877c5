use cellfree::simulator::{assemble, find_report, run_drops, run_experiment, SimConfig};
use cellfree::DetectorKind;

fn small() -> SimConfig {
    SimConfig {
        num_aps: 4,
        antennas_per_ap: 4,
        num_users: 6,
        tau_p: 6,
        n_drops: 20,
        n_inner: 10,
        seed: 42,
        ..SimConfig::default()
    }
}

#[test]
fn reruns_are_identical() {
    let c = SimConfig {
        n_drops: 1,
        n_inner: 1,
        ..small()
    };
    assert_eq!(run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
}

#[test]
fn any_sharding_matches_serial() {
    let c = SimConfig {
        n_drops: 7,
        n_inner: 3,
        alphas: vec![1, 5],
        ..small()
    };
    let serial = run_experiment(&c).unwrap();
    for cuts in [vec![0, 7], vec![0, 3, 7], vec![0, 1, 2, 6, 7]] {
        let mut parts = Vec::new();
        for w in cuts.windows(2).rev() {
            parts.extend(run_drops(&c, w[0]..w[1]).unwrap());
        }
        assert_eq!(assemble(&c, parts).unwrap(), serial);
    }
}

#[test]
fn different_seeds_differ() {
    let c = SimConfig {
        n_drops: 2,
        n_inner: 2,
        alphas: vec![3],
        ..small()
    };
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&SimConfig { seed: 43, ..c }).unwrap();
    assert_ne!(a[0].per_drop_rates, b[0].per_drop_rates);
}

#[test]
fn rates_grow_with_bits_and_stay_below_baseline() {
    let c = small();
    let reports = run_experiment(&c).unwrap();
    for d in DetectorKind::ALL {
        let base = find_report(&reports, d, None).unwrap();
        let (b_avg, b_se) = (base.avg_rate(), base.std_error().unwrap());
        let mut prev: Option<(f64, f64)> = None;
        for alpha in 1..=12 {
            let r = find_report(&reports, d, Some(alpha)).unwrap();
            let (avg, se) = (r.avg_rate(), r.std_error().unwrap());
            if let Some((p_avg, p_se)) = prev {
                assert!(avg >= p_avg - 2.0 * se.max(p_se), "{d} alpha {alpha}: {avg} < {p_avg}");
            }
            assert!(avg <= b_avg + 2.0 * se.max(b_se), "{d} alpha {alpha}: {avg} > baseline {b_avg}");
            prev = Some((avg, se));
        }
    }
}

#[test]
fn random_pilots_reduce_rates() {
    let c = SimConfig {
        alphas: vec![],
        n_drops: 10,
        ..small()
    };
    let orthogonal = run_experiment(&c).unwrap();
    let shared = run_experiment(&SimConfig { tau_p: 2, ..c }).unwrap();
    for d in DetectorKind::ALL {
        let a = find_report(&orthogonal, d, None).unwrap().avg_rate();
        let b = find_report(&shared, d, None).unwrap().avg_rate();
        assert!(b < a, "{d}: {b} vs {a}");
    }
}
