//! Flag/file merging and digest-named run directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use spi_lab::digest::digest_bytes;

use crate::{CliResult, Ctx, Failure};

/// Overlays every flag that was given onto the settings read from the TOML
/// file, then validates the result as `T`. Unknown file keys are rejected.
pub fn resolve<T: Serialize + DeserializeOwned>(file: Option<&Path>, flags: &T) -> CliResult<T> {
    let mut merged = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("config file {}: {e}", path.display())))?;
            let table: toml::Table = toml::from_str(&text)?;
            serde_json::to_value(table)?
        }
        None => Value::Object(Default::default()),
    };
    let Value::Object(given) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    let target = merged.as_object_mut().expect("toml tables are objects");
    for (k, v) in given {
        let unset =
            v.is_null() || v == Value::Bool(false) || v.as_array().is_some_and(Vec::is_empty);
        if !unset {
            target.insert(k, v);
        }
    }
    serde_json::from_value(merged).map_err(|e| Failure::Config(format!("configuration: {e}")))
}

/// Returns the value or a config error naming the missing key.
pub fn need<T>(value: Option<T>, key: &str) -> CliResult<T> {
    value.ok_or_else(|| Failure::Config(format!("missing setting `{key}`")))
}

pub fn check_path(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "{} does not exist",
            path.display()
        )))
    }
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// `<out-dir>/<command>-<digest>` where the digest covers the command
    /// name and the canonical JSON of the resolved settings.
    pub fn create<T: Serialize>(ctx: &Ctx, command: &str, settings: &T) -> CliResult<Self> {
        let json = serde_json::to_string_pretty(settings)?;
        let digest = &digest_bytes(format!("{command}\n{json}").as_bytes())[..16];
        let path = ctx.out_dir.join(format!("{command}-{digest}"));
        fs::create_dir_all(&path)?;
        let run = Self { path };
        run.write("config.json", &json)?;
        Ok(run)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Copies `contents` to an extra user-chosen location.
pub fn export(out: Option<&Path>, contents: &str) -> CliResult<()> {
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
    }
    Ok(())
}
