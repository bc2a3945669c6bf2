//! Helpers shared by the binary-level test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_zfepr");

/// Runs the binary in `dir` and returns its output.
pub fn zfepr(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn zfepr")
}

/// Runs the binary and panics with its stderr unless it exits with `code`.
pub fn zfepr_expect(dir: &Path, args: &[&str], code: i32) -> Output {
    let out = zfepr(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "zfepr {args:?}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(&p, text).unwrap();
    p
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a CSV file as strings, header excluded.
pub fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_rows(path);
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

pub fn system_toml(isotope: &str, a_perp: f64, a_par: f64) -> String {
    format!("[system]\nisotope = \"{isotope}\"\na_perp_mhz = {a_perp:?}\na_par_mhz = {a_par:?}\n")
}

/// Shallow ensemble, 10 mM target, 3 MHz total linewidth.
pub const SENSOR_TOML: &str = "
[sensor]
t1_prime_ms = 1.3
gamma2_nv_mhz = 1.0
kappa = 0.71
depth_nm = 8.0

[target]
gamma2_target_mhz = 2.0
concentration_mm = 10.0
";

pub const SWEEP_TOML: &str = "
[sweep]
start_mhz = 20.0
stop_mhz = 130.0
points = 111
";

/// ¹⁵N (32, 120) on a 1 MHz grid at SNR 25 with a slanted baseline.
pub fn n15_config() -> String {
    format!(
        "{}{SENSOR_TOML}{SWEEP_TOML}\n[noise]\nsnr = 25.0\n\n[baseline]\nkind = \"slanted\"\nslope_per_mhz = 1e-5\noffset = 0.002\n",
        system_toml("15N", 32.0, 120.0)
    )
}

pub fn sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(std::fs::read(path).unwrap());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
