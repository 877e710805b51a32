//! Focal pressure of the cylinder against a 56-element planar array.

use levipick::experiments::{compare_geometry, Setup};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    let r = compare_geometry(&setup.rig, &setup.planar)?;
    println!("cylinder focus z = {:.1} mm: |p| = {:.0} Pa", r.cylinder_focus * 1e3, r.cylinder_pressure);
    println!("planar best focal distance {:.2} mm: |p| = {:.0} Pa", r.planar_distance * 1e3, r.planar_pressure);
    println!("ratio {:.3}", r.ratio);
    Ok(())
}
