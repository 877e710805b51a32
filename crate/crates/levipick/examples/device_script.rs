//! Drive the controller emulator with protocol lines and watch staged and live banks.

use levipick::device::{DeviceLimits, DeviceState, Response};

fn main() -> levipick::error::Result<()> {
    let mut dev = DeviceState::new(DeviceLimits::default())?;
    let script = "# shift ring 2 by a quarter cycle\nRING 1 ON\nRING 2 ON\nINC 14 625\nDEC 15 625\nQUERY\nCOMMIT\nSET 60 3\nQUERY";
    for line in script.lines() {
        match dev.apply_line(line) {
            Ok(Some(Response::Snapshot(s))) => println!("{line:<12} -> {}", &s[..s.len().min(70)]),
            Ok(Some(r)) => println!("{line:<12} -> {r:?}"),
            Ok(None) => println!("{line:<12} -> (comment)"),
            Err(e) => println!("{line:<12} -> error: {e}"),
        }
    }
    let live = dev.live();
    println!("live commit {}: ch14 = {}, ch15 = {}", live.commit_counter, live.phases[14], live.phases[15]);
    Ok(())
}
