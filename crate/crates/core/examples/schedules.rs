//! Sequential and flooding BP reach the same fixed point; the sequential
//! order needs fewer sweeps.

use std::time::Instant;

use gmdkp::cavity::{bp_run, IterOpts, Schedule};
use gmdkp::instance::{generate_instance, EnsembleParams};

fn main() -> gmdkp::Result<()> {
    let inst = generate_instance(&EnsembleParams {
        n_items: 80,
        alpha: 1.0,
        x_max: 2,
        seed: 1,
        ..EnsembleParams::default()
    })?;
    let mut runs = Vec::new();
    for schedule in [Schedule::Sequential, Schedule::Flooding] {
        let t = Instant::now();
        let (m, _, diag) = bp_run(
            &inst,
            &IterOpts {
                schedule,
                ..IterOpts::default()
            },
            None,
        )?;
        println!(
            "{:<10} {diag} in {:.2}s",
            schedule.name(),
            t.elapsed().as_secs_f64()
        );
        runs.push(m);
    }
    println!(
        "largest marginal difference {:.2e}",
        runs[0].max_abs_diff(&runs[1])
    );
    Ok(())
}
