//! Sample U, F and |p| on a vertical slice through the axis with rings 1 and 2 on.

use levipick::acoustics::Vec3;
use levipick::experiments::{ring_array, Setup};
use levipick::gorkov::{sample_grid, GridSpec};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    let arr = ring_array(&setup.rig, &[true, true, false, false])?;
    let spec = GridSpec {
        min: Vec3::new(-0.01, 0.0, 0.0005),
        max: Vec3::new(0.01, 0.0, 0.02),
        resolution: [21, 1, 40],
    };
    let grid = sample_grid(&arr, &spec, &setup.rig.particle)?;
    let strongest = grid.cells.iter().max_by(|a, b| a.pressure_magnitude.total_cmp(&b.pressure_magnitude)).unwrap();
    println!("{} cells, array hash {}", grid.cells.len(), &grid.array_hash[..12]);
    println!("peak |p| {:.0} Pa at {:?}", strongest.pressure_magnitude, strongest.position.as_slice());
    for line in grid.to_columns().lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
