pub mod benchmark;
pub mod data;
pub mod estimate;
pub mod fit;
pub mod pipeline;
pub mod train;

use std::path::Path;

use anyhow::Result;

use crate::config::read_table;

/// Parsed `--config` file, if any.
pub fn config_table(path: Option<&Path>) -> Result<Option<toml::Table>> {
    path.map(read_table).transpose()
}
