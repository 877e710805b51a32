//! Lifted dish against the phase-shifted ring that stands in for it.

use levipick::experiments::{reflector_equivalence, Setup};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    let r = reflector_equivalence(&setup.rig, &setup.dish)?;
    println!("displacement {:.3} mm, relative RMS {:.4}", r.displacement * 1e3, r.relative_rms);
    println!("{:>7} {:>12} {:>12}", "z mm", "Fz dish", "Fz ring");
    for (z, a, b) in r.profile.iter().step_by(8) {
        println!("{:>7.1} {a:>12.3e} {b:>12.3e}", z * 1e3);
    }
    Ok(())
}
