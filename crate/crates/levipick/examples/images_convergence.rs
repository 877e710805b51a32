//! How much the axial pressure changes when the image series is extended.

use levipick::experiments::{image_truncation, DishSettings, Setup};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    println!("{:>5} {:>8} {:>10} {:>10}", "rings", "gap mm", "R = 0.9", "R = 1.0");
    for rings in 1..=4 {
        for gap in [0.005, 0.01, 0.02] {
            let dish = DishSettings {
                rings,
                gap,
                ..setup.dish
            };
            let r = image_truncation(&setup.rig, &dish)?;
            println!("{rings:>5} {:>8.0} {:>10.4} {:>10.4}", gap * 1e3, r.error, r.lossless_error);
        }
    }
    Ok(())
}
