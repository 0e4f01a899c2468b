//! `M_opt` over a grid of constraint densities and caps. The rows stop
//! changing once `x_max` is large.

use gmdkp::instance::EnsembleParams;
use gmdkp::replica::find_m_opt;

fn main() {
    let alphas = [0.25, 0.5, 1.0, 2.0];
    print!("{:>6}", "x_max");
    for a in alphas {
        print!(" {:>10}", format!("α={a}"));
    }
    println!();
    for x_max in [1, 2, 3, 5, 10] {
        print!("{x_max:>6}");
        for a in alphas {
            let params = EnsembleParams {
                x_max,
                ..EnsembleParams::default()
            };
            match find_m_opt(a, &params) {
                Ok(r) => print!(" {:>10.5}", r.m_opt),
                Err(_) => print!(" {:>10}", "-"),
            }
        }
        println!();
    }
}
