//! Sweeps spent by MPGS with and without warm starts.

use gmdkp::cavity::IterOpts;
use gmdkp::instance::{generate_instance, EnsembleParams};
use gmdkp::mpgs::{solve, SolverKind};

fn main() -> gmdkp::Result<()> {
    let inst = generate_instance(&EnsembleParams {
        n_items: 50,
        alpha: 1.0,
        seed: 4,
        ..EnsembleParams::default()
    })?;
    for kind in [SolverKind::Bp, SolverKind::Gamp] {
        for warm in [false, true] {
            let t = solve(&inst, kind, &IterOpts::default(), warm)?;
            println!(
                "{:<5} warm={warm:<5} profit {} picks {} sweeps {} unconverged {}",
                kind.name(),
                t.final_evaluation.profit,
                t.picks.len(),
                t.total_sweeps(),
                t.unconverged
            );
        }
    }
    Ok(())
}
