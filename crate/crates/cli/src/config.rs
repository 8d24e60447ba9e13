//! Run configuration: defaults, optional TOML file, then command-line
//! flags, in that order. The resolved value is written next to outputs.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A configuration or usage problem; the binary exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// `defaults` overlaid with the keys of `file`. Unknown keys are rejected by
/// the target type.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&toml::Table>) -> Result<T> {
    let mut table = toml::Table::try_from(defaults).context("serializing defaults")?;
    if let Some(f) = file {
        merge(&mut table, f.clone());
    }
    T::deserialize(toml::Value::Table(table)).map_err(|e| usage(format!("invalid configuration: {e}")))
}

pub fn write_resolved<T: Serialize>(cfg: &T, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = toml::to_string_pretty(cfg).context("serializing configuration")?;
    std::fs::write(dir.join("config.toml"), text).context("writing resolved configuration")?;
    Ok(())
}

/// Assign every `Some` flag onto the config field of the same name.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}
pub(crate) use overlay;

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Demo {
        a: u32,
        b: String,
        inner: Inner,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        x: f64,
        y: f64,
    }

    fn demo() -> Demo {
        Demo {
            a: 1,
            b: "s".into(),
            inner: Inner { x: 1.0, y: 2.0 },
        }
    }

    #[test]
    fn file_keys_override_defaults() {
        let t: toml::Table = "a = 5\n[inner]\ny = 3.0\n".parse().unwrap();
        let r = resolve(&demo(), Some(&t)).unwrap();
        assert_eq!(r.a, 5);
        assert_eq!(r.inner, Inner { x: 1.0, y: 3.0 });
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let t: toml::Table = "zzz = 1\n".parse().unwrap();
        let e = resolve(&demo(), Some(&t)).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
    }
}
