use flowsum_core::empirical::{clamp_zero_gaps, default_size_grid, empirical_flow_size_pmf, empirical_survival, round_to_grid};
use flowsum_core::likelihood::{mixture_weights, session_loglik};
use flowsum_core::model::fenton_wilkinson_params;
use flowsum_core::netflow::aggregate;
use flowsum_core::rng::stream_rng;
use flowsum_core::simulate::{thin_flow, thin_flow_fast};
use flowsum_core::special::log_sum_exp;
use flowsum_core::{ConvolutionPolicy, Flow, FlowSizePmf, LikelihoodConfig, NetFlow, PacketModel};
use proptest::prelude::*;

fn gaps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..10.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fenton_wilkinson_keeps_the_mean(k in 1u64..5000, mu in -10.0f64..5.0, sigma in 0.05f64..3.0) {
        let (m, s) = fenton_wilkinson_params(k, mu, sigma).unwrap();
        let lhs = m + s * s / 2.0;
        let rhs = (k as f64).ln() + mu + sigma * sigma / 2.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn aggregation_sums_the_gaps(lead in 0.0f64..100.0, g in gaps()) {
        let flow = Flow::new(lead, g.clone()).unwrap();
        let nf = aggregate(&flow);
        let total: f64 = g.iter().sum();
        prop_assert_eq!(nf.size as usize, g.len() + 1);
        prop_assert!((nf.s_d - total).abs() <= 1e-12 * total);
        prop_assert_eq!(nf.s_f, lead);
    }

    #[test]
    fn thinning_keeps_an_ordered_subsequence(g in gaps(), q in 0.01f64..1.0, seed in any::<u64>()) {
        let flow = Flow::new(0.5, g).unwrap();
        for fast in [false, true] {
            let mut rng = stream_rng(seed, 1, 0);
            let t = if fast { thin_flow_fast(&flow, q, &mut rng) } else { thin_flow(&flow, q, &mut rng) }.unwrap();
            prop_assert!(t.retained().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(t.retained().iter().all(|&i| i < flow.size()));
            if let Some(sub) = t.flow() {
                prop_assert!(sub.gaps().iter().all(|x| *x > 0.0));
                prop_assert!(sub.duration() <= flow.duration() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn full_retention_is_identity(g in gaps(), seed in any::<u64>()) {
        let flow = Flow::new(0.5, g).unwrap();
        let t = thin_flow_fast(&flow, 1.0, &mut stream_rng(seed, 1, 0)).unwrap();
        prop_assert_eq!(t.len(), flow.size());
    }

    #[test]
    fn clamping_only_touches_zeros(mut g in prop::collection::vec(prop_oneof![Just(0.0f64), 1e-9f64..1.0], 0..50)) {
        let before = g.clone();
        let zeros = before.iter().filter(|x| **x == 0.0).count();
        prop_assert_eq!(clamp_zero_gaps(&mut g, 1e-7), zeros);
        for (a, b) in before.iter().zip(&g) {
            if *a == 0.0 { prop_assert_eq!(*b, 1e-7) } else { prop_assert_eq!(a, b) }
        }
    }

    #[test]
    fn grid_rounding_lands_on_nearest_point(size in 1u64..2_000_000) {
        let grid = default_size_grid();
        let r = round_to_grid(size, &grid);
        prop_assert!(grid.contains(&r));
        let best = grid.iter().map(|g| g.abs_diff(size)).min().unwrap();
        prop_assert!(r.abs_diff(size) == best || size > *grid.last().unwrap());
        prop_assert_eq!(round_to_grid(r, &grid), r);
    }

    #[test]
    fn empirical_pmf_ignores_order(mut sizes in prop::collection::vec(2u64..50_000, 1..200)) {
        let grid = default_size_grid();
        let a = empirical_flow_size_pmf(&sizes, &grid).unwrap();
        sizes.reverse();
        let b = empirical_flow_size_pmf(&sizes, &grid).unwrap();
        prop_assert_eq!(a.support(), b.support());
        for (x, y) in a.masses().iter().zip(b.masses()) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn empirical_survival_is_non_increasing(mut v in prop::collection::vec(0.0f64..1e3, 1..100), a in 0.0f64..1e3, b in 0.0f64..1e3) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (empirical_survival(&v, lo), empirical_survival(&v, hi));
        prop_assert!(s_lo >= s_hi);
        prop_assert!((0.0..=1.0).contains(&s_lo));
    }

    #[test]
    fn log_sum_exp_bounds(xs in prop::collection::vec(-700.0f64..700.0, 1..30)) {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&xs);
        prop_assert!(l >= m - 1e-12);
        prop_assert!(l <= m + (xs.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn session_loglik_is_permutation_invariant(
        rows in prop::collection::vec((0.0f64..10.0, 1e-4f64..50.0, 2u64..12), 2..20),
        rot in 0usize..20,
    ) {
        let pmf = FlowSizePmf::zipf((1..=12).collect(), 1.0).unwrap();
        let model = PacketModel::gamma(0.8, 3.0).unwrap();
        let nf: Vec<NetFlow> = rows.iter().map(|&(f, d, s)| NetFlow::new(f, d, s).unwrap()).collect();
        let mut shuffled = nf.clone();
        shuffled.rotate_left(rot % nf.len());
        shuffled.reverse();
        let p = ConvolutionPolicy::default();
        let a = session_loglik(&nf, 1.0, &model, &pmf, &p).unwrap();
        let b = session_loglik(&shuffled, 1.0, &model, &pmf, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixture_weights_normalise(m_tilde in 2u64..8, q in 0.05f64..1.0, restricted in any::<bool>()) {
        let pmf = FlowSizePmf::zipf(vec![2, 3, 5, 8, 13, 21, 34], 1.0).unwrap();
        let mut cfg = LikelihoodConfig::new(pmf, q);
        cfg.restricted = restricted;
        cfg.truncation = 0.0;
        if let Ok(w) = mixture_weights(m_tilde, &cfg) {
            prop_assert!((w.normalized_total() - 1.0).abs() <= 1e-10);
            prop_assert!(w.entries.iter().all(|e| e.span + 1 >= m_tilde));
        }
    }
}
