//! Radiation force against an independent five-point difference of the potential.

use levipick::experiments::{gradient_check, Setup};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    for seed in 0..4 {
        let r = gradient_check(&setup.rig, seed)?;
        println!("seed {seed}: worst relative error {:.2e} over {} points", r.max_relative_error, r.points);
    }
    Ok(())
}
