//! Plan the six-stage lift and replay it from a particle resting on the axis.

use levipick::experiments::{picking, Setup};

fn main() -> levipick::error::Result<()> {
    let report = picking(&Setup::default())?;
    println!("{} commits planned in {:.2} s", report.schedule.commit_count(), report.seconds);
    for (stage, outcome) in report.schedule.stages.iter().zip(&report.run.stages) {
        println!(
            "stage {} rings {:?}: expected {:6.2} mm, reached {:6.2} mm",
            stage.label,
            stage.rings_on,
            stage.expected_height * 1e3,
            outcome.height * 1e3
        );
    }
    println!("final height {:.2} mm, pass {}", report.final_height * 1e3, report.passed);
    println!("first script lines:");
    for line in report.schedule.to_script().lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
