use conflictfdr::gamma::{make_gamma, GammaKind, GammaSequence, DEFAULT_HORIZON};

/// Kahan sum, smallest terms first; independent of the library summation.
fn naive_total(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for j in (1..=n).rev() {
        let y = f(j as f64) - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

#[test]
fn power_decay_two_normalizes_to_zeta() {
    let g = make_gamma(GammaKind::PowerDecay { exponent: 2.0 }, DEFAULT_HORIZON).unwrap();
    let z = naive_total(|j| 1.0 / (j * j), 10_000_000);
    assert!((g.at(1) - 1.0 / z).abs() < 1e-12);
    // 6 / pi^2 up to the truncated tail (about 1e-7 of the mass)
    assert!((g.at(1) - 0.607_927_101_854_026_6).abs() < 1e-7);
    assert!((g.at(3) - g.at(1) / 9.0).abs() < 1e-15);
}

#[test]
fn log_decay_leading_weight() {
    let n = 1_000_000;
    let g = make_gamma(GammaKind::LogDecay, n).unwrap();
    let z = naive_total(|j: f64| j.max(2.0).ln() / (j * j.ln().sqrt().exp()), n);
    let expected = 2f64.ln() / z;
    assert!((g.at(1) - expected).abs() < 1e-12 * expected);
    assert!((g.at(1) - 0.102_573_210_608_816).abs() < 1e-12, "{}", g.at(1));
}

#[test]
fn indices_outside_support_are_zero() {
    let g = make_gamma(GammaKind::LogDecay, 1000).unwrap();
    for j in [i64::MIN, -5, 0, 1001, 5000] {
        assert_eq!(g.at(j), 0.0);
    }
}

fn check_shape(g: &GammaSequence, upto: i64) {
    let mut prev = f64::INFINITY;
    let mut sum = 0.0;
    for j in 1..=upto {
        let w = g.at(j);
        assert!(w >= 0.0 && w <= prev, "gamma_{j} = {w} after {prev}");
        prev = w;
        sum += w;
        assert!(sum <= 1.0 + 1e-12, "partial sum {sum} at {j}");
    }
}

#[test]
fn sequences_are_non_increasing_with_bounded_sums() {
    check_shape(&make_gamma(GammaKind::LogDecay, 200_000).unwrap(), 200_010);
    check_shape(&make_gamma(GammaKind::PowerDecay { exponent: 1.5 }, 100_000).unwrap(), 100_010);
    check_shape(&make_gamma(GammaKind::PowerDecay { exponent: 3.0 }, 70_000).unwrap(), 70_000);
    let full = make_gamma(GammaKind::LogDecay, 200_000).unwrap();
    assert!((full.partial_sum(200_000) - 1.0).abs() < 1e-9);
}

#[test]
fn default_sequence_beyond_cache() {
    let g = GammaSequence::default_log_decay();
    // the cached prefix and the on-demand tail join without a step up
    for j in 65_530..65_545 {
        assert!(g.at(j + 1) <= g.at(j));
    }
    assert!(g.at(DEFAULT_HORIZON as i64) > 0.0);
    assert_eq!(g.at(DEFAULT_HORIZON as i64 + 1), 0.0);
}
