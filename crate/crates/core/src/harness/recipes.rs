//! Committed experiment configs, addressable by name.

use super::ExperimentConfig;
use crate::{Error, Result};

pub const ODOR: &str = include_str!("../../configs/odor.cfg");
pub const STREAM: &str = include_str!("../../configs/stream.cfg");
pub const IMBALANCE: &str = include_str!("../../configs/imbalance.cfg");

pub const NAMES: &[&str] = &["odor", "stream", "imbalance"];

pub fn text(name: &str) -> Option<&'static str> {
    match name {
        "odor" => Some(ODOR),
        "stream" => Some(STREAM),
        "imbalance" => Some(IMBALANCE),
        _ => None,
    }
}

pub fn load(name: &str) -> Result<ExperimentConfig> {
    let t = text(name).ok_or_else(|| Error::Config(format!("no recipe named {name:?}")))?;
    ExperimentConfig::parse(t)
}
