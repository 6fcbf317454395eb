//! Configuration files, output bundles and figures.

pub mod bundle;
pub mod config;
pub mod svg;

pub use bundle::{
    load_snapshot, read_bundle, save_snapshot, write_bundle, write_front_csv, BundleData, Manifest,
};
pub use config::{echo_config, parse_config, parse_config_str, scenario_config};
pub use svg::{render_scatter, render_strategies};
