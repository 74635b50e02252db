#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use emx_core::model::MarketParams;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn scenario(name: &str) -> PathBuf {
    manifest_dir().join("scenarios").join(format!("{name}.json"))
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests").join("golden")
}

/// `(subcommand, scenarios)` covering every bundled model family.
pub const SUITE: &[(&str, &[&str])] = &[
    (
        "simulate",
        &[
            "continuous",
            "zero_imbalance",
            "balanced_dae",
            "discrete",
            "discrete_memory",
            "delay",
            "fractional",
        ],
    ),
    ("stability", &["continuous", "balanced_dae"]),
    ("equilibrium", &["continuous", "discrete_memory"]),
    ("dispatch", &["dispatch"]),
];

/// Runs the bundled suite through the `emx` binary into `out`.
pub fn run_cli_suite(out: &Path) -> Result<(), String> {
    for (cmd, names) in SUITE {
        let mut c = Command::new(env!("CARGO_BIN_EXE_emx"));
        c.arg(cmd).arg("--out").arg(out).arg("--jobs").arg("4");
        for n in *names {
            c.arg("--scenario").arg(scenario(n));
        }
        let res = c.output().map_err(|e| e.to_string())?;
        if !res.status.success() {
            return Err(format!(
                "emx {cmd} failed: {}",
                String::from_utf8_lossy(&res.stderr)
            ));
        }
    }
    Ok(())
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

/// Byte comparison of `out` against the committed golden files.
/// `UPDATE_GOLDEN=1` rewrites the goldens instead.
pub fn compare_golden(out: &Path) -> Result<(), String> {
    let golden = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = fs::remove_dir_all(&golden);
        fs::create_dir_all(&golden).map_err(|e| e.to_string())?;
        for f in sorted_files(out) {
            fs::copy(out.join(&f), golden.join(&f)).map_err(|e| e.to_string())?;
        }
    }
    let produced = sorted_files(out);
    let expected = sorted_files(&golden);
    if produced != expected {
        return Err(format!("file sets differ: {produced:?} vs {expected:?}"));
    }
    for f in &produced {
        let a = fs::read(out.join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(golden.join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs from golden"));
        }
    }
    Ok(())
}

pub fn sloped(m: usize, n: usize) -> MarketParams {
    MarketParams {
        m,
        n,
        a: (0..m).map(|i| 10.0 + 2.0 * i as f64).collect(),
        b: (0..m).map(|i| 1.0 + 0.5 * i as f64).collect(),
        c: (0..n).map(|j| 50.0 + 3.0 * j as f64).collect(),
        d: (0..n).map(|j| 1.0 + 0.25 * j as f64).collect(),
        alpha: vec![1.0; m],
        beta: vec![1.0; n],
        k_price: 0.5,
        h_gain: 3.0,
        lambda0: 30.0,
    }
}
