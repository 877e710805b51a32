//! Exit codes and artifacts of the `levipick` binary.

use std::io::Write;
use std::process::{Command, Stdio};

fn levipick(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_levipick")).args(args).output().unwrap()
}

#[test]
fn nodes_with_rings_off_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = levipick(&["nodes", "--rings", "0000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
    assert_eq!(text, "z,stability,U,rest_z\n");
}

#[test]
fn field_export_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = levipick(&["field", "--grid", "5,1,7", "--rings", "1100", "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let fa = std::fs::read(a.path().join("field.csv")).unwrap();
    assert_eq!(fa, std::fs::read(b.path().join("field.csv")).unwrap());
    let text = String::from_utf8(fa).unwrap();
    assert!(text.starts_with("x,y,z,U,Fx,Fy,Fz,p_abs\n"));
    assert_eq!(text.lines().count(), 1 + 5 * 7);
}

#[test]
fn pick_writes_trajectory_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = levipick(&["pick", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("step,x,y,z\n"));
    let z: f64 = traj.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(z >= 0.05 - 1e-4, "final z {z}");
    let script = std::fs::read_to_string(dir.path().join("schedule.txt")).unwrap();
    assert!(script.contains("COMMIT"));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema = \"arrayspec v1\"\n[particle]\nradius = -1.0\n").unwrap();
    assert_eq!(levipick(&["pick", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(levipick(&["nodes", "--rings", "11"]).status.code(), Some(2));
    assert_eq!(levipick(&["field", "--grid", "1,2"]).status.code(), Some(2));
    assert_eq!(levipick(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missed_threshold_exits_with_three() {
    // the default dish setup keeps more than 2 % second-order change
    let dir = tempfile::tempdir().unwrap();
    let out = levipick(&["images-convergence", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("images_convergence.csv").exists());
}

#[test]
fn device_repl_answers_each_line() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_levipick"))
        .args(["device", "repl"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"RING 1 ON\nCOMMIT\nquery\n").unwrap();
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[..2], ["OK", "COMMITTED 1"]);
    assert!(lines[2].starts_with("STATE commit=1 rings=1000"));
}
