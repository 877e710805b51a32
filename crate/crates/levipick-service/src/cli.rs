//! Command-line front end.
//!
//! Every subcommand writes its artifacts into `--out` and prints a short
//! summary. Exit status is 0 on success, 2 for invalid input and 3 when an
//! experiment misses its threshold.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levipick::acoustics::Vec3;
use levipick::config::Config;
use levipick::device::{DeviceState, Response};
use levipick::error::Error;
use levipick::experiments::{
    basin, compare_geometry, gradient_check, image_truncation, picking, reflector_equivalence, ring_array, DishSettings,
    Setup,
};
use levipick::gorkov::{find_axial_nodes, levitation_equilibrium, sample_grid, GridSpec};

#[derive(Debug, Parser)]
#[command(name = "levipick", version, about = "Ultrasonic levitation picking simulator")]
pub struct Cli {
    /// `arrayspec v1` TOML file; library defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifact files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for randomised checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Field grid resolution as nx,ny,nz.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<[usize; 3]>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export U, F and |p| over a box (field.csv).
    Field {
        /// Ring mask, lowest ring first, e.g. 1100.
        #[arg(long, default_value = "1111")]
        rings: String,
    },
    /// Axial trap nodes (nodes.csv).
    Nodes {
        #[arg(long, default_value = "1100")]
        rings: String,
    },
    /// Plan and replay the lift (trajectory.csv, schedule.txt).
    Pick,
    /// Classify start cells on the table (basin.csv).
    Basin,
    /// Cylinder against planar focal pressure (compare_geometry.csv).
    CompareGeometry,
    /// Image-series truncation table (images_convergence.csv).
    ImagesConvergence,
    /// Lifted dish against phased ring (reflector_equiv.csv).
    ReflectorEquiv,
    /// Force against independent differences of the potential (gradient_check.csv).
    GradientCheck,
    /// Controller emulator.
    Device {
        #[command(subcommand)]
        command: DeviceCommand,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum DeviceCommand {
    /// Read protocol lines from stdin and print one reply per line.
    Repl,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if *x > 0 && *y > 0 && *z > 0 => Ok([*x, *y, *z]),
        _ => Err("expected three positive integers nx,ny,nz".into()),
    }
}

enum Failure {
    Invalid(String),
    Experiment(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Self::Invalid(e.to_string())
        } else {
            Self::Experiment(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn check(passed: bool, what: &str) -> Outcome {
    if passed {
        Ok(())
    } else {
        Err(Failure::Experiment(format!("{what} missed its threshold")))
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Outcome {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn mask(s: &str, rings: usize) -> Result<Vec<bool>, Failure> {
    if s.len() != rings || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(Failure::Invalid(format!("ring mask {s:?} must be {rings} characters of 0 or 1")));
    }
    Ok(s.chars().map(|c| c == '1').collect())
}

pub fn run(cli: Cli) -> ExitCode {
    let result = load(&cli).and_then(|(config, setup)| dispatch(&cli, &config, setup));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Experiment(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(3)
        }
    }
}

fn load(cli: &Cli) -> Result<(Config, Setup), Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let setup = config.setup()?;
    Ok((config, setup))
}

fn dispatch(cli: &Cli, config: &Config, setup: Setup) -> Outcome {
    let out = &cli.out;
    let rig = &setup.rig;
    match &cli.command {
        Command::Field { rings } => {
            let arr = ring_array(rig, &mask(rings, rig.geometry.rings)?)?;
            let [nx, ny, nz] = cli.grid.unwrap_or([21, 1, 41]);
            let half = 0.9 * rig.geometry.radius();
            let top = rig.geometry.ring_heights.last().copied().unwrap_or(0.0) + 0.005;
            let span = |n: usize| if n == 1 { 0.0 } else { half };
            let spec = GridSpec {
                min: Vec3::new(-span(nx), -span(ny), 5e-4),
                max: Vec3::new(span(nx), span(ny), top),
                resolution: [nx, ny, nz],
            };
            let grid = sample_grid(&arr, &spec, &rig.particle)?;
            println!("{} cells, array {}", grid.cells.len(), grid.array_hash);
            write(out, "field.csv", &grid.to_columns())
        }
        Command::Nodes { rings } => {
            let on = mask(rings, rig.geometry.rings)?;
            let mut text = String::from("z,stability,U,rest_z\n");
            if on.iter().any(|r| *r) {
                let arr = ring_array(rig, &on)?;
                let top = rig.geometry.ring_heights.last().copied().unwrap_or(0.0) + rig.geometry.radius();
                for n in find_axial_nodes(&arr, &rig.particle, 1e-4, top)? {
                    let rest = levitation_equilibrium(&arr, &rig.particle, &n)?.map_or(String::new(), |p| format!("{:.9e}", p.z));
                    text += &format!("{:.9e},{:?},{:.9e},{rest}\n", n.position.z, n.stability, n.potential);
                }
            }
            print!("{text}");
            write(out, "nodes.csv", &text)
        }
        Command::Pick => {
            let r = picking(&setup)?;
            for (s, o) in r.schedule.stages.iter().zip(&r.run.stages) {
                println!("stage {}: {:.2} mm", s.label, o.height * 1e3);
            }
            println!("final height {:.2} mm", r.final_height * 1e3);
            write(out, "trajectory.csv", &r.run.trajectory_columns())?;
            write(out, "schedule.txt", &r.schedule.to_script())?;
            check(r.passed, "picking")
        }
        Command::Basin => {
            let schedule = picking(&setup)?.schedule;
            let r = basin(&setup, &schedule)?;
            println!(
                "equivalent diameter {:.1} mm, symmetry defects {}, centre pickable {}",
                r.equivalent_diameter * 1e3,
                r.symmetry_defects,
                r.center_pickable
            );
            if !r.in_band {
                println!("flag: diameter outside [20, 42] mm");
            }
            write(out, "basin.csv", &r.map.to_columns())?;
            check(r.passed, "basin map")
        }
        Command::CompareGeometry => {
            let r = compare_geometry(rig, &setup.planar)?;
            println!("ratio {:.4}", r.ratio);
            if !r.in_band {
                println!("flag: ratio outside [1.12, 1.42]");
            }
            let text = format!(
                "quantity,value\ncylinder_focus,{:.9e}\ncylinder_pressure,{:.9e}\nplanar_distance,{:.9e}\nplanar_pressure,{:.9e}\nratio,{:.9e}\n",
                r.cylinder_focus, r.cylinder_pressure, r.planar_distance, r.planar_pressure, r.ratio
            );
            write(out, "compare_geometry.csv", &text)?;
            check(r.passed, "geometry comparison")
        }
        Command::ImagesConvergence => {
            let mut text = String::from("rings,gap,error,lossless_error\n");
            for rings in 1..=rig.geometry.rings {
                for gap in [0.005, 0.01, 0.02] {
                    let d = DishSettings {
                        rings,
                        gap,
                        ..setup.dish
                    };
                    let r = image_truncation(rig, &d)?;
                    text += &format!("{rings},{gap:.6e},{:.9e},{:.9e}\n", r.error, r.lossless_error);
                }
            }
            print!("{text}");
            write(out, "images_convergence.csv", &text)?;
            let r = image_truncation(rig, &setup.dish)?;
            println!("configured dish: error {:.4}", r.error);
            check(r.passed, "image truncation")
        }
        Command::ReflectorEquiv => {
            let r = reflector_equivalence(rig, &setup.dish)?;
            println!("relative RMS {:.4}", r.relative_rms);
            let mut text = String::from("z,Fz_moved,Fz_phased\n");
            for (z, a, b) in &r.profile {
                text += &format!("{z:.9e},{a:.9e},{b:.9e}\n");
            }
            write(out, "reflector_equiv.csv", &text)?;
            check(r.passed, "reflector equivalence")
        }
        Command::GradientCheck => {
            let r = gradient_check(rig, cli.seed)?;
            println!("max relative error {:.3e}", r.max_relative_error);
            write(
                out,
                "gradient_check.csv",
                &format!("seed,points,max_relative_error\n{},{},{:.9e}\n", cli.seed, r.points, r.max_relative_error),
            )?;
            check(r.passed, "gradient check")
        }
        Command::Device {
            command: DeviceCommand::Repl,
        } => repl(&setup, std::io::stdin().lock(), std::io::stdout().lock()),
        Command::Serve { addr } => serve(config.clone(), addr),
    }
}

/// Line-oriented shell over a fresh device.
fn repl(setup: &Setup, input: impl BufRead, mut output: impl Write) -> Outcome {
    let mut dev = DeviceState::new(setup.rig.limits())?;
    for line in input.lines() {
        let line = line?;
        let reply = match dev.apply_line(&line) {
            Ok(None) => continue,
            Ok(Some(Response::Staged)) => "OK".to_string(),
            Ok(Some(Response::Committed(n))) => format!("COMMITTED {n}"),
            Ok(Some(Response::Snapshot(s))) => s,
            Err(e) => format!("ERR {e}"),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn serve(config: Config, addr: &str) -> Outcome {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(crate::api::AppState::new(config))).await?;
        Ok(())
    })
}
