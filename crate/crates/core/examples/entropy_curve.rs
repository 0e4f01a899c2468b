//! Replica-symmetric entropy `S(M)` and its zero `M_opt`.
//!
//! ```text
//! cargo run --release --example entropy_curve -- 0.5 1
//! ```

use gmdkp::instance::EnsembleParams;
use gmdkp::replica::find_m_opt;

fn main() -> gmdkp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let alpha: f64 = args.first().map_or(0.5, |a| a.parse().expect("alpha"));
    let x_max: u32 = args.get(1).map_or(1, |a| a.parse().expect("x_max"));
    let params = EnsembleParams {
        x_max,
        ..EnsembleParams::default()
    };
    let res = find_m_opt(alpha, &params)?;
    println!(
        "{:>10} {:>12} {:>8} {:>8} {:>6}",
        "M", "S", "q", "Q", "nodes"
    );
    for p in &res.curve {
        println!(
            "{:>10.5} {:>12.6} {:>8.4} {:>8.4} {:>6}",
            p.m, p.entropy, p.order.q, p.order.q_big, p.nodes
        );
    }
    println!(
        "M_opt = {:.6} at alpha = {alpha}, x_max = {x_max}",
        res.m_opt
    );
    Ok(())
}
