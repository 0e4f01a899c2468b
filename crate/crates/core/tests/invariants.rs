//! Cross-module properties on random ensemble instances.

use gmdkp::cavity::{bp_run, gamp_run, lnh_curvature, IterOpts};
use gmdkp::instance::{
    evaluate, generate_instance, save_instance, EnsembleParams, Instance, Selection,
};
use gmdkp::mpgs::{solve, SolverKind};
use gmdkp::oracle::{exact_marginals, exact_optimum};
use gmdkp::replica::rs_entropy;
use proptest::prelude::*;

fn ensemble(n: usize, alpha: f64, x_max: u32, seed: u64) -> EnsembleParams {
    EnsembleParams {
        n_items: n,
        alpha,
        x_max,
        seed,
        ..EnsembleParams::default()
    }
}

fn small_instance() -> impl Strategy<Value = Instance> {
    (3usize..9, 1usize..4, 1u32..3, any::<u64>()).prop_map(|(n, k, x, seed)| {
        generate_instance(&ensemble(n, 1.0, x, seed).with_constraints(k)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_shape_and_purity(n in 1usize..40, alpha in 0.05f64..2.5, x in 1u32..6, seed in any::<u64>()) {
        let p = ensemble(n, alpha, x, seed);
        prop_assume!(p.n_constraints() >= 1);
        let a = generate_instance(&p).unwrap();
        prop_assert_eq!(a.n_constraints(), (alpha * n as f64 + 0.5).floor() as usize);
        prop_assert_eq!(a.weights_flat().len(), n * a.n_constraints());
        prop_assert!(a.capacities().iter().all(|&c| c == 0.25 * n as f64));
        prop_assert!(a.max_counts().iter().all(|&c| c == x));
        prop_assert!(a.profits().iter().all(|&v| v == 1.0));
        prop_assert_eq!(save_instance(&a), save_instance(&generate_instance(&p).unwrap()));
    }

    #[test]
    fn feasible_iff_no_negative_slack(inst in small_instance(), raw in prop::collection::vec(0u32..3, 8)) {
        let counts: Vec<u32> = inst.max_counts().iter().zip(&raw).map(|(&m, &c)| c.min(m)).collect();
        let ev = evaluate(&inst, &Selection::from(counts), None).unwrap();
        prop_assert_eq!(ev.feasible, ev.slacks.iter().all(|&s| s >= 0.0));
        prop_assert!(ev.scaled_m.is_none());
    }

    #[test]
    fn empty_selection_scaled_m(n in 1usize..500) {
        let p = ensemble(n, 1.0, 1, 0);
        let inst = generate_instance(&p).unwrap();
        let ev = evaluate(&inst, &Selection::empty(n), Some(&p)).unwrap();
        let expected = -(0.25 / 0.5) * (n as f64).sqrt();
        prop_assert!((ev.scaled_m.unwrap() - expected).abs() <= 1e-14 * expected.abs());
    }

    #[test]
    fn engines_return_distributions(inst in small_instance(), sweeps in 1usize..30) {
        let opts = IterOpts { max_sweeps: sweeps, ..IterOpts::default() };
        let (m, state, _) = bp_run(&inst, &opts, None).unwrap();
        prop_assert!(m.is_normalized(1e-9));
        prop_assert!(state.is_normalized(1e-9));
        for i in 0..inst.n_items() {
            for mu in 0..inst.n_constraints() {
                prop_assert!(state.item_moments(i, mu).1 >= 0.0);
                prop_assert!(state.cavity_moments(mu, i).1 >= opts.v_floor);
            }
        }
        let (m, g, _) = gamp_run(&inst, &opts, None).unwrap();
        prop_assert!(m.is_normalized(1e-9));
        prop_assert!(g.var.iter().all(|&v| v >= 0.0));
        prop_assert!(g.load_var.iter().all(|&v| v >= opts.v_floor));
        prop_assert!(g.stiffness.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn oracle_bounds_every_solver(inst in small_instance()) {
        let best = exact_optimum(&inst).unwrap();
        let check = evaluate(&inst, &best.best_selection, None).unwrap();
        prop_assert!(check.feasible);
        prop_assert_eq!(check.profit, best.best_profit);
        for kind in [SolverKind::Bp, SolverKind::Gamp, SolverKind::Greedy] {
            let t = solve(&inst, kind, &IterOpts::default(), true).unwrap();
            prop_assert!(t.final_evaluation.feasible);
            prop_assert!(t.final_evaluation.profit <= best.best_profit);
            let mut counts = vec![0u32; inst.n_items()];
            t.picks.iter().for_each(|&i| counts[i] += 1);
            prop_assert_eq!(&counts, &t.final_selection.counts);
        }
    }

    #[test]
    fn more_capacity_never_hurts(inst in small_instance(), mu in 0usize..3, extra in 0.0f64..2.0) {
        let mut wider = inst.clone();
        let mu = mu % inst.n_constraints();
        wider.capacities_mut()[mu] += extra;
        prop_assert!(exact_optimum(&wider).unwrap().best_profit >= exact_optimum(&inst).unwrap().best_profit);
        prop_assert!(exact_marginals(&wider).unwrap().is_normalized(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn saddle_order_parameters_are_consistent(m in -0.2f64..0.2, alpha in 0.1f64..0.5, x in 1u32..4) {
        let params = EnsembleParams { x_max: x, ..EnsembleParams::default() };
        let Ok(p) = rs_entropy(m, alpha, &params, None) else {
            // past the end of the replica-symmetric branch
            return Ok(());
        };
        prop_assert!(p.order.q <= p.order.q_big);
        prop_assert!(p.order.q_big <= (x * x) as f64 + 1e-9);
        prop_assert!(p.residual < 1e-5);
    }
}

#[test]
fn tail_curvature_positive_on_wide_grid() {
    for j in -600..=600 {
        let u = j as f64 * 0.05;
        assert!(lnh_curvature(u) > 0.0, "u = {u}");
    }
}

#[test]
fn bp_and_gamp_agree_on_large_instance() {
    let inst = generate_instance(&ensemble(200, 1.0, 1, 11)).unwrap();
    let opts = IterOpts::default();
    let (bp, _, db) = bp_run(&inst, &opts, None).unwrap();
    let (gamp, _, dg) = gamp_run(&inst, &opts, None).unwrap();
    assert!(db.converged && dg.converged, "{db} / {dg}");
    let diff = bp.max_abs_diff(&gamp);
    assert!(diff < 1e-2, "max difference {diff}");
}
