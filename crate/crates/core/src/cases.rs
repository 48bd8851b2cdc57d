//! Bundled test systems.

use crate::grid::{NetworkCase, Result};

pub const TWO_AREA_TOML: &str = include_str!("../cases/two_area.toml");

/// Names accepted by [`bundled`].
pub const BUNDLED: &[&str] = &["two-area"];

pub fn bundled(name: &str) -> Option<Result<NetworkCase>> {
    match name {
        "two-area" => Some(NetworkCase::from_toml_str(TWO_AREA_TOML)),
        _ => None,
    }
}

pub fn two_area() -> NetworkCase {
    NetworkCase::from_toml_str(TWO_AREA_TOML).expect("bundled case is valid")
}
