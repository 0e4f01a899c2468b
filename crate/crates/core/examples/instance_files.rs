//! Writes an instance in the text format and reads it back.

use gmdkp::instance::{generate_instance, load_instance, save_instance, EnsembleParams};

fn main() -> gmdkp::Result<()> {
    let inst = generate_instance(&EnsembleParams {
        n_items: 4,
        alpha: 0.5,
        x_max: 3,
        seed: 2,
        ..EnsembleParams::default()
    })?;
    let text = save_instance(&inst);
    print!("{text}");
    assert_eq!(load_instance(&text)?, inst);
    println!("round trip ok");
    Ok(())
}
