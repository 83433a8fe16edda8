mod common;

use common::*;
use episodic::analytics::three_group_cluster;
use episodic::clem::m_step;
use episodic::gof::StepCdf;
use episodic::window::labelling_from_mask;
use episodic::*;
use proptest::prelude::*;

fn setup(seed: u64, n: usize, bspline: bool, weibull: bool) -> (ModelParams, EventSequence) {
    let mut r = rng(seed);
    let params = random_params(&mut r, bspline, weibull);
    let window = random_window(&mut r, n);
    (params, window)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bspline_basis_is_a_partition_of_unity(knots in 5usize..12, u in 0.0f64..1.0) {
        let h = HazardSpec::bspline(knots, vec![0.0; knots - 1]).unwrap();
        let b = h.basis(u);
        prop_assert!(b.iter().all(|v| *v >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hazard_is_periodic_and_integral_additive(
        seed in any::<u64>(), bspline in any::<bool>(), t in 0.0f64..3.0, days in 1u32..5,
        a in 0.0f64..2.0, l1 in 0.0f64..3.0, l2 in 0.0f64..3.0,
    ) {
        let h = random_hazard(&mut rng(seed), bspline);
        let shifted = h.evaluate(t + days as f64);
        prop_assert!((h.evaluate(t) - shifted).abs() < 1e-9 * shifted);
        let (b, c) = (a + l1, a + l1 + l2);
        let whole = h.integral(a, c);
        prop_assert!((h.integral(a, b) + h.integral(b, c) - whole).abs() < 1e-10 * whole.max(1.0));
        prop_assert!(h.integral(a, b) >= 0.0);
    }

    #[test]
    fn loglik_is_invariant_to_whole_day_shifts(
        seed in any::<u64>(), n in 1usize..9, days in 1u32..4, bspline in any::<bool>(), weibull in any::<bool>(),
    ) {
        let (params, w) = setup(seed, n, bspline, weibull);
        let a = dp_loglik(&w, &params);
        let b = dp_loglik(&w.shifted(days as f64), &params);
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn marginal_dominates_every_labeling(
        seed in any::<u64>(), n in 1usize..9, mask in any::<u32>(), bspline in any::<bool>(),
    ) {
        let (params, w) = setup(seed, n, bspline, false);
        let n = w.len();
        let labels = labelling_from_mask(n, mask & ((1u32 << (n - 1)) - 1));
        let joint = complete_log_density(&w, &labels, &params).unwrap();
        prop_assert!(dp_loglik(&w, &params) >= joint - 1e-12 * joint.abs().max(1.0));
    }

    #[test]
    fn posterior_statistics_are_coherent(
        seed in any::<u64>(), n in 1usize..15, bspline in any::<bool>(), weibull in any::<bool>(),
    ) {
        let (params, w) = setup(seed, n, bspline, weibull);
        let s = posterior_stats(&w, &params);
        let n = w.len() as f64;
        let probs = s.parent_probs();
        prop_assert_eq!(probs[0], 1.0);
        prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        let tol = 1e-9 * n.max(1.0);
        prop_assert!((probs.iter().sum::<f64>() - s.expected_episodes).abs() < tol);
        prop_assert!((s.expected_episodes + s.expected_offspring[0] + s.expected_offspring[1] - n).abs() < tol);
        let segs = s.expected_segments[0] + s.expected_segments[1];
        prop_assert!((segs - s.expected_episodes - s.expected_switches).abs() < tol);
        let events = segs + s.expected_segment_excess[0] + s.expected_segment_excess[1];
        prop_assert!((events - n).abs() < tol);
        prop_assert!(s.expected_original_parents <= s.expected_episodes + tol);
    }

    #[test]
    fn m_step_keeps_parameters_valid(
        seed in any::<u64>(), n in 1usize..12, bspline in any::<bool>(), weibull in any::<bool>(),
    ) {
        let (params, w) = setup(seed, n, bspline, weibull);
        let s = posterior_stats(&w, &params);
        let next = m_step(&s, &params, 50).unwrap().params;
        prop_assert!(next.validate().is_ok());
        prop_assert!(next.alpha > 0.0 && next.alpha < 1.0);
        prop_assert!(next.to_vec()[1..next.dim() - next.hazard.dim()].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn one_em_step_never_descends(seed in any::<u64>(), n in 2usize..12, bspline in any::<bool>(), weibull in any::<bool>()) {
        let (params, w) = setup(seed, n, bspline, weibull);
        let s = posterior_stats(&w, &params);
        let next = m_step(&s, &params, 50).unwrap().params;
        prop_assert!(dp_loglik(&w, &next) >= s.log_likelihood - 1e-8);
    }

    #[test]
    fn step_cdf_is_monotone_and_order_free(
        data in prop::collection::vec((0.0f64..5.0, 0.0f64..1.0), 1..40),
        probes in prop::collection::vec(-1.0f64..6.0, 1..20),
    ) {
        prop_assume!(data.iter().map(|d| d.1).sum::<f64>() > 0.0);
        let a = StepCdf::weighted(data.clone());
        let mut reversed = data.clone();
        reversed.reverse();
        let b = StepCdf::weighted(reversed);
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for v in probes {
            let f = a.eval(v);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f >= last);
            prop_assert!((f - b.eval(v)).abs() < 1e-12);
            last = f;
        }
        prop_assert_eq!(a.eval(-1.0), 0.0);
        prop_assert!((a.eval(5.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_labels_follow_scale(values in prop::collection::vec(0.0f64..100.0, 3..30), c in 0.1f64..50.0) {
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assume!(distinct.len() >= 3);
        let base = three_group_cluster(&values).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let s = three_group_cluster(&scaled).unwrap();
        prop_assert!((s.objective - c * c * base.objective).abs() <= 1e-9 * (c * c * base.objective).max(1e-9));
        for k in 0..3 {
            prop_assert!((s.centers[k] - c * base.centers[k]).abs() <= 1e-9 * (c * base.centers[k]).abs().max(1e-9));
        }
        prop_assert_eq!(s.labels, base.labels);
    }

    #[test]
    fn params_vector_round_trips(seed in any::<u64>(), bspline in any::<bool>(), weibull in any::<bool>()) {
        let p = random_params(&mut rng(seed), bspline, weibull);
        let q = p.with_vec(&p.to_vec());
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(p.names().len(), p.dim());
        let json = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(p, back);
    }
}
