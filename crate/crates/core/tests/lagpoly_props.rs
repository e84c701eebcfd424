use nalgebra::DVector;
use nowcast_core::datavintage::{HighFrequencySeries, MixedFrequencyPanel};
use nowcast_core::lagpoly::{build_weight_matrix, construct_design, design_groups, legendre_p, LagSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn single_flat_weight_is_the_lag_average(
        nh in 1usize..6,
        nl in 1usize..4,
        seed in prop::collection::vec(-10.0f64..10.0, 15),
    ) {
        let spec = LagSpec::legendre(&[("x", nh, nl)], 1, 0, 0).unwrap();
        let w = build_weight_matrix(&spec, 0).unwrap();
        let m = nh * nl;
        prop_assert_eq!(w.shape(), (m, 1));
        let x = DVector::from_fn(m, |j, _| seed[j % seed.len()]);
        let mean = x.sum() / m as f64;
        prop_assert!(((w.transpose() * &x)[0] - mean).abs() <= 1e-12);
    }

    #[test]
    fn group_widths_follow_the_spec(
        ar in 0usize..4,
        degrees in 1usize..5,
        layout in prop::collection::vec((1usize..4, 1usize..3), 0..4),
    ) {
        let names: Vec<String> = (0..layout.len()).map(|k| format!("x{k}")).collect();
        let covs: Vec<(&str, usize, usize)> =
            layout.iter().zip(&names).map(|(&(nh, nl), n)| (n.as_str(), nh, nl)).collect();
        let spec = LagSpec::legendre(&covs, degrees, ar, 0).unwrap();
        let (groups, cols) = design_groups(&spec);
        prop_assert_eq!(groups.column_count(), ar + degrees * layout.len());
        prop_assert_eq!(cols.len(), groups.column_count());
        let widths: Vec<usize> = groups.groups().iter().map(|g| g.columns.len()).collect();
        let mut want = if ar > 0 { vec![ar] } else { vec![] };
        want.extend(std::iter::repeat_n(degrees, layout.len()));
        prop_assert_eq!(widths, want);
    }

    #[test]
    fn shifted_legendre_is_orthogonal(a in 0.5f64..5.0, i in 0usize..6, j in 0usize..6) {
        // composite Simpson on [0, a]
        let n = 4000;
        let h = a / n as f64;
        let f = |s: f64| legendre_p(i, 2.0 * s / a - 1.0) * legendre_p(j, 2.0 * s / a - 1.0);
        let mut acc = f(0.0) + f(a);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        let integral = acc * h / 3.0;
        let want = if i == j { a / (2 * i + 1) as f64 } else { 0.0 };
        prop_assert!((integral - want).abs() <= 1e-9 * a);
    }
}

#[test]
fn design_rows_apply_the_weights() {
    let t = 12;
    let target: Vec<f64> = (0..t).map(|i| (i as f64).sin()).collect();
    let x: Vec<f64> = (0..3 * t).map(|i| (i as f64 * 0.37).cos()).collect();
    let spec = LagSpec::legendre(&[("x", 3, 2)], 3, 2, 1).unwrap();
    let covs = [HighFrequencySeries { name: "x".into(), high_freq_per_low: 3, values: x.clone() }];
    let panel = MixedFrequencyPanel::from_high_frequency("y", &target, &covs, &spec).unwrap();
    let d = construct_design(&panel, &spec).unwrap();
    let w = build_weight_matrix(&spec, 0).unwrap();
    for (r, &period) in d.row_periods.iter().enumerate() {
        let t0 = period as usize;
        assert_eq!(d.response[r], target[t0 + 1]);
        assert_eq!(d.matrix[(r, 0)], target[t0]);
        assert_eq!(d.matrix[(r, 1)], target[t0 - 1]);
        let lags = DVector::from_fn(6, |j, _| x[3 * (t0 + 1) - 1 - j]);
        let feat = w.transpose() * lags;
        for l in 0..3 {
            assert!((d.matrix[(r, 2 + l)] - feat[l]).abs() < 1e-14);
        }
    }
    // the first usable period needs one AR lag back and a two-period window
    assert_eq!(d.row_periods.first(), Some(&1));
    assert_eq!(d.rows(), t - 2);
}
