//! Load an `arrayspec v1` file and show what it resolves to.

use levipick::config::Config;

fn main() -> levipick::error::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/default.toml").into());
    let cfg = Config::load(path.as_ref())?;
    let setup = cfg.setup()?;
    println!("config hash {}", cfg.hash());
    println!(
        "{} channels, ring diameter {:.2} mm, wavelength {:.3} mm",
        setup.rig.geometry.channel_count(),
        setup.rig.geometry.ring_diameter * 1e3,
        setup.rig.constants.wavelength() * 1e3
    );
    println!("particle weight {:.3e} N", setup.rig.particle.weight());
    Ok(())
}
