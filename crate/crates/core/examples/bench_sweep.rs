//! A small ensemble experiment: CSV tables and SVG charts written to
//! `bench_example/` (or the directory given as the first argument).

use gmdkp::bench::{run_bench, BenchConfig};

fn main() -> gmdkp::Result<()> {
    let mut cfg = BenchConfig::parse(
        "n = 30\n\
         alpha = 0.5, 1, 2\n\
         x_max = 1\n\
         trials = 10\n\
         engines = bp, gamp, greedy\n\
         output_dir = bench_example\n",
    )?;
    if let Some(dir) = std::env::args().nth(1) {
        cfg.output_dir = dir.into();
    }
    let report = run_bench(&cfg)?;
    for s in &report.summary {
        let m = s.scaled_m.expect("successful trials");
        println!(
            "α = {:<4} {:<7} scaled M {:>8.4} ± {:.4}",
            s.cell.alpha,
            s.engine.name(),
            m.mean,
            m.stderr.unwrap_or(0.0)
        );
    }
    for t in &report.theory {
        if let Ok(m) = t.m_opt {
            println!("α = {:<4} theory  M_opt    {m:>8.4}", t.alpha);
        }
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
