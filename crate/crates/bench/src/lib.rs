//! Benchmark-only crate; see `benches/`.

use std::path::PathBuf;

use dualarm_core::harness::{load_scenario, Scenario};

/// A bundled scenario by name.
pub fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    load_scenario(path).expect("bundled scenarios are valid")
}
