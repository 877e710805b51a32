//! Axial trap nodes of the single-ring and two-ring fields over the table.

use levipick::experiments::{ring_array, Setup};
use levipick::gorkov::{find_axial_nodes, levitation_equilibrium};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    let part = setup.rig.particle;
    for rings in [[true, false, false, false], [true, true, false, false]] {
        let arr = ring_array(&setup.rig, &rings)?;
        println!("rings {rings:?}");
        println!("{:>9} {:>10} {:>12} {:>12}", "z (mm)", "class", "U (J)", "rest z (mm)");
        for node in find_axial_nodes(&arr, &part, 1e-4, 0.03)? {
            let rest = levitation_equilibrium(&arr, &part, &node)?.map_or("-".to_string(), |p| format!("{:.3}", p.z * 1e3));
            println!(
                "{:>9.3} {:>10} {:>12.3e} {:>12}",
                node.position.z * 1e3,
                format!("{:?}", node.stability),
                node.potential,
                rest
            );
        }
    }
    Ok(())
}
