//! Draws one ensemble instance and solves it with MPGS-BP, MPGS-GAMP and the
//! density greedy.
//!
//! ```text
//! cargo run --release --example generate_and_solve -- 100 1.0 2
//! ```

use std::time::Instant;

use gmdkp::cavity::IterOpts;
use gmdkp::instance::{generate_instance, EnsembleParams};
use gmdkp::mpgs::{solve, SolverKind};

fn main() -> gmdkp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let params = EnsembleParams {
        n_items: arg(0, "60").parse().expect("N"),
        alpha: arg(1, "1.0").parse().expect("alpha"),
        x_max: arg(2, "1").parse().expect("x_max"),
        seed: 7,
        ..EnsembleParams::default()
    };
    let inst = generate_instance(&params)?;
    println!(
        "N = {}, K = {}, x_max = {}",
        inst.n_items(),
        inst.n_constraints(),
        params.x_max
    );
    println!(
        "{:<8} {:>8} {:>10} {:>8} {:>10}",
        "solver", "profit", "scaled M", "sweeps", "time"
    );
    for kind in [SolverKind::Bp, SolverKind::Gamp, SolverKind::Greedy] {
        let t = Instant::now();
        let trace = solve(&inst, kind, &IterOpts::default(), true)?;
        let ev = &trace.final_evaluation;
        assert!(ev.feasible);
        println!(
            "{:<8} {:>8} {:>10.4} {:>8} {:>9.2}s",
            kind.name(),
            ev.profit,
            params.scaled_m(ev.profit, inst.n_items()),
            trace.total_sweeps(),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
