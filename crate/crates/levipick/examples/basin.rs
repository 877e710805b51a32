//! Classify start cells on the table by whether the default schedule picks them.
//!
//! Takes about half a minute on a laptop in release mode.

use levipick::dynamics::BasinClass;
use levipick::experiments::{basin, picking, Setup};

fn main() -> levipick::error::Result<()> {
    let setup = Setup::default();
    let schedule = picking(&setup)?.schedule;
    let report = basin(&setup, &schedule)?;
    let h = report.map.half_width as i64;
    for j in (-h..=h).rev() {
        let row: String = (-h..=h)
            .map(|i| match report.map.class_at(i, j) {
                Some(BasinClass::Pickable) => 'P',
                Some(BasinClass::Attractable) => 'a',
                _ => '.',
            })
            .collect();
        println!("{row}");
    }
    println!(
        "equivalent diameter {:.1} mm, symmetry defects {}, {:.1} s",
        report.equivalent_diameter * 1e3,
        report.symmetry_defects,
        report.seconds
    );
    Ok(())
}
