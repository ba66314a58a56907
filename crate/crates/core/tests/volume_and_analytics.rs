use std::f64::consts::PI;

use hypcoop::analytics::{
    expected_interference, pair_fraction, pair_fraction_detailed, pair_probability, pathloss_tail_integral,
    ExpectationSpec, PathlossModel,
};
use hypcoop::numerics::{volume_f_mc, volume_f_paper, volume_f_slice, QuadratureSpec, DEGENERATE_AREA_FACTOR};
use hypcoop::{ControlSet, MarkModel, SeededRng};
use proptest::prelude::*;

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

#[test]
fn slice_paper_and_mc_agree() {
    let cases = [
        (0.8, 1.5, 2.0, MarkModel::uniform(1.0, 3.0).unwrap()),
        (0.3, 0.4, 0.6, MarkModel::beta_from_mean_var(0.5, 0.02).unwrap()),
        (1.2, 0.2, 0.7, MarkModel::beta_from_mean_var(0.4, 0.01).unwrap()),
        (0.05, 0.5, 0.5, MarkModel::uniform(0.2, 0.8).unwrap()),
    ];
    for (i, (s, z, zt, m)) in cases.iter().enumerate() {
        let a = volume_f_slice(*s, *z, *zt, m, &q()).unwrap().value;
        let b = volume_f_paper(*s, *z, *zt, m, &q()).unwrap().value;
        assert!((a - b).abs() <= 1e-6 * a.max(1.0), "case {i}: {a} vs {b}");
        let mc = volume_f_mc(*s, *z, *zt, m, 200_000, &mut SeededRng::new(i as u64)).unwrap();
        assert!((mc.value - a).abs() <= 3.0 * mc.stderr, "case {i}: mc {mc:?} vs {a}");
    }
}

#[test]
fn degenerate_volume_is_quadratic_in_s() {
    let m = MarkModel::degenerate(0.7).unwrap();
    for s in [1e-3, 0.1, 1.0, 7.0] {
        let f = volume_f_slice(s, 0.7, 0.7, &m, &q()).unwrap().value;
        assert!((f / (s * s) - DEGENERATE_AREA_FACTOR).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_is_symmetric_positive_and_grows_with_s(
        s in 0.01..3.0f64,
        ds in 0.0..1.0f64,
        z in 0.05..0.95f64,
        zt in 0.05..0.95f64,
    ) {
        let m = MarkModel::beta_from_mean_var(0.5, 0.03).unwrap();
        let f = volume_f_slice(s, z, zt, &m, &q()).unwrap().value;
        let g = volume_f_slice(s, zt, z, &m, &q()).unwrap().value;
        prop_assert_eq!(f, g);
        prop_assert!(f > 0.0);
        let h = volume_f_slice(s + ds, z, zt, &m, &q()).unwrap().value;
        prop_assert!(h >= f * (1.0 - 1e-9));
    }

    #[test]
    fn pair_probability_decreases(
        s in 0.01..2.0f64,
        ds in 0.0..1.0f64,
        lambda in 0.1..5.0f64,
        z in 0.1..0.9f64,
        zt in 0.1..0.9f64,
    ) {
        let m = MarkModel::uniform(0.05, 0.95).unwrap();
        let d = ControlSet::Full;
        let p = pair_probability(s, z, zt, lambda, &d, &m, &q()).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(pair_probability(s + ds, z, zt, lambda, &d, &m, &q()).unwrap() <= p * (1.0 + 1e-12));
        prop_assert!(pair_probability(s, z, zt, 2.0 * lambda, &d, &m, &q()).unwrap() <= p * (1.0 + 1e-12));
    }
}

#[test]
fn degenerate_pair_fraction_ignores_lambda() {
    let m = MarkModel::degenerate(0.5).unwrap();
    let e = ExpectationSpec::default();
    for lambda in [0.1, 1.0, 10.0] {
        let p = pair_fraction(lambda, &m, &ControlSet::Full, &e, &q()).unwrap();
        assert!((p - PI / DEGENERATE_AREA_FACTOR).abs() < 1e-8);
    }
}

#[test]
fn pair_fraction_tracks_control_threshold() {
    let m = MarkModel::beta_from_mean_var(0.5, 0.05).unwrap();
    let e = ExpectationSpec::TensorQuadrature { nodes: 16 };
    let mut last = 0.0;
    for tau in [0.4, 0.2, 0.1, 0.05, 0.0] {
        let p = pair_fraction(1.0, &m, &ControlSet::min_product(tau).unwrap(), &e, &q()).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(p >= last - 1e-9, "tau {tau}: {p} < {last}");
        last = p;
    }
    let full = pair_fraction(1.0, &m, &ControlSet::Full, &e, &q()).unwrap();
    assert!((last - full).abs() < 1e-9);
}

#[test]
fn tensor_and_monte_carlo_expectations_agree() {
    let m = MarkModel::beta_from_mean_var(0.5, 0.05).unwrap();
    let d = ControlSet::Full;
    let t = pair_fraction(1.0, &m, &d, &ExpectationSpec::TensorQuadrature { nodes: 24 }, &q()).unwrap();
    let mc = pair_fraction_detailed(1.0, &m, &d, &ExpectationSpec::MonteCarlo { n: 2000, seed: 3 }, &q()).unwrap();
    assert!((t - mc.value).abs() <= 3.0 * mc.stderr, "{t} vs {mc:?}");
}

#[test]
fn interference_split_conserves_total() {
    let m = MarkModel::uniform(0.3, 0.7).unwrap();
    let e = ExpectationSpec::TensorQuadrature { nodes: 12 };
    for (beta, r) in [(2.5, 0.5), (3.0, 1.0), (4.0, 2.0)] {
        let pl = PathlossModel::new(beta, r).unwrap();
        let split = expected_interference(1.3, &m, &ControlSet::Full, &pl, &e, &q()).unwrap();
        let total = 1.3 * pathloss_tail_integral(&pl).unwrap();
        assert!(((split.singles + split.pairs) - total).abs() <= 1e-8 * total);
    }
}
