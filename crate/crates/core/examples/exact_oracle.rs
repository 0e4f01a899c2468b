//! Exhaustive optimum and feasible count of a small instance, next to what
//! the heuristics reach.

use gmdkp::cavity::IterOpts;
use gmdkp::instance::{generate_instance, EnsembleParams};
use gmdkp::mpgs::{solve, SolverKind};
use gmdkp::oracle::exact_optimum;

fn main() -> gmdkp::Result<()> {
    for seed in 0..5 {
        let params = EnsembleParams {
            n_items: 14,
            x_max: 2,
            seed,
            ..EnsembleParams::default()
        }
        .with_constraints(3);
        let inst = generate_instance(&params)?;
        let exact = exact_optimum(&inst)?;
        let bp = solve(&inst, SolverKind::Bp, &IterOpts::default(), true)?;
        let greedy = solve(&inst, SolverKind::Greedy, &IterOpts::default(), false)?;
        println!(
            "seed {seed}: optimum {} over {} feasible assignments {:?}; mpgs-bp {}, greedy {}",
            exact.best_profit,
            exact.n_feasible,
            exact.best_selection.counts,
            bp.final_evaluation.profit,
            greedy.final_evaluation.profit
        );
    }
    Ok(())
}
