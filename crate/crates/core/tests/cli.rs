use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fracsob::cli::parse_config;
use fracsob::Error;

fn fracsob(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsob"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn shipped_defaults_file_matches_builtin_defaults() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/defaults.conf");
    let from_file = parse_config(&["sweep"], Some(&file)).unwrap();
    let builtin = parse_config(&["sweep"], None).unwrap();
    assert_eq!(from_file.solver, builtin.solver);
    assert_eq!(from_file.grid, builtin.grid);
    assert_eq!(from_file.mask.shape(), builtin.mask.shape());
    assert_eq!(from_file.out, builtin.out);
}

#[test]
fn command_line_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    fs::write(&file, "M=256\ntol=1e-6\n").unwrap();
    let c = parse_config(&["solve", "--M", "512"], Some(&file)).unwrap();
    assert_eq!(c.grid.points_per_dim(), 512);
    assert_eq!(c.solver.tol, 1e-6);
    let flag = file.to_str().unwrap();
    let c = parse_config(&["solve", "--config", flag], None).unwrap();
    assert_eq!(c.grid.points_per_dim(), 256);
}

#[test]
fn config_errors_name_the_key() {
    let e = parse_config(&["solve", "--N", "2", "--s", "1.5"], None).unwrap_err();
    assert!(matches!(e, Error::Config { ref key, .. } if key == "s"));
    let e = parse_config(&["solve", "--omega", "interval:-9,1"], None).unwrap_err();
    assert!(matches!(e, Error::Config { ref key, .. } if key == "omega"));
    let e = parse_config(&["solve", "--eps-schedule", "0.1,0.2"], None).unwrap_err();
    assert!(matches!(e, Error::Config { ref key, .. } if key == "eps_schedule"));
    let e = parse_config(&["solve", "--M", "100"], None).unwrap_err();
    assert!(matches!(e, Error::Config { ref key, .. } if key == "M"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--omega", "interval:-8,1"][..],
        &["solve", "--N", "1", "--s", "0.5"],
        &["solve", "--bogus"],
        &["frobnicate"],
    ] {
        let out = fracsob(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn non_convergence_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsob(&["solve", "--max-iters", "2", "--M", "128", "--L", "4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = rows(&dir.path().join("solve.csv"));
    assert_eq!(r[0][9], "false");
}

#[test]
fn sweep_writes_one_row_per_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsob(&["sweep", "--N", "1", "--s", "0.25", "--M", "512", "--reproducible"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with(
        "N,s,M,L,eps,value,envelope,multiplier,iters,converged,argmax_coords,mass_r1,mass_r2,tail_energy\n"
    ));
    let r = rows(&dir.path().join("sweep.csv"));
    assert_eq!(r.len(), 4);
    let values: Vec<f64> = r.iter().map(|row| row[5].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] >= 0.99 * w[0]));
    for (row, eps) in r.iter().zip(["0.8", "0.4", "0.2", "0.1"]) {
        assert_eq!(&row[..5], &["1", "0.25", "512", "8", eps]);
    }
}

#[test]
fn bubble_verify_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsob(&["bubble-verify"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = rows(&dir.path().join("bubble_verify.csv"));
    assert_eq!(r.len(), 4);
    let sstar: f64 = r[0][9].parse().unwrap();
    assert!((sstar - 1.393203929685678).abs() < 1e-12);
}

#[test]
fn reproducible_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["solve", "--M", "256", "--L", "4", "--seed", "3", "--emit-fields", "--reproducible"];
    assert_eq!(fracsob(&args, &a).status.code(), Some(0));
    assert_eq!(fracsob(&args, &b).status.code(), Some(0));
    for f in ["solve.csv", "solve_trace.csv", "fields/u_eps0.8.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let dump = fs::read(a.join("fields/u_eps0.8.bin")).unwrap();
    let header = dump.split(|&c| c == b'\n').next().unwrap();
    assert!(!String::from_utf8_lossy(header).contains("timestamp"));
}

#[test]
fn field_dump_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsob(&["solve", "--M", "128", "--L", "4", "--emit-fields"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let f = fs::File::open(dir.path().join("fields/u_eps0.8.bin")).unwrap();
    let u = fracsob::spectral::read_field(std::io::BufReader::new(f)).unwrap();
    assert_eq!(u.grid().points_per_dim(), 128);
    assert!((fracsob::spaces::hs_dot_norm_sq(&u, 0.25) - 1.0).abs() < 1e-8);
}

#[test]
fn remaining_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["norms-check", "recovery-demo", "gamma-check"] {
        let out = fracsob(&[cmd, "--M", "256", "--L", "4"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["norms.csv", "recovery.csv", "gamma_check.csv"] {
        let r = rows(&dir.path().join(f));
        assert!(!r.is_empty(), "{f}");
    }
    let g = rows(&dir.path().join("gamma_check.csv"));
    assert!(g.iter().filter(|r| r[6] == "gamma_limit_value").all(|r| r[9] == "true"));
}

#[test]
fn two_dimensional_solve_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsob(
        &["solve", "--N", "2", "--s", "0.5", "--M", "64", "--L", "4", "--omega", "ball:0,0;1", "--eps-schedule", "0.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("solve.csv"));
    assert_eq!(r[0][10].split(';').count(), 2);
}
