//! Layered run configuration: built-in defaults, then an optional JSON file,
//! then command-line flags. The resolved result is written next to every
//! command's outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Component, Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SNAPSHOT_FILE: &str = "config.json";

/// Flag values that override the file and defaults, keyed by dotted path.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value` at `path` when the flag was given.
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.0.push((path.to_string(), v));
        }
        self
    }

    /// Applies a `path=value` assignment; the value is parsed as JSON and
    /// falls back to a plain string.
    pub fn assign(&mut self, spec: &str) -> Result<&mut Self> {
        let (path, raw) = spec
            .split_once('=')
            .filter(|(p, _)| !p.is_empty())
            .ok_or_else(|| Error::Config(format!("`--set {spec}`: expected path=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.0.push((path.to_string(), value));
        Ok(self)
    }

    /// Records `true` at `path` when the switch was given.
    pub fn flag(&mut self, path: &str, on: bool) -> &mut Self {
        self.set(path, on.then_some(true))
    }
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, l) => *b = l,
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cur.get(*part).is_some_and(Value::is_object) {
            cur[*part] = Value::Object(Map::new());
        }
        cur = &mut cur[*part];
    }
    cur[parts[parts.len() - 1]] = value;
}

/// Reads a config file. A snapshot written by an earlier run is accepted in
/// place of a bare parameter object when its command matches.
fn read_layer(path: &Path, command: &str) -> Result<Value> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let value: Value = serde_json::from_reader(File::open(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
    }
    match (value.get("command"), value.get("params")) {
        (Some(Value::String(c)), Some(params)) => {
            if c != command {
                return Err(Error::Config(format!(
                    "{} is a snapshot of `{c}`, not `{command}`",
                    path.display()
                )));
            }
            Ok(params.clone())
        }
        _ => Ok(value),
    }
}

/// Defaults, overlaid with the config file, overlaid with flags.
pub fn resolve<T>(command: &str, file: Option<&Path>, overrides: &Overrides) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        merge(&mut value, read_layer(path, command)?);
    }
    for (path, v) in &overrides.0 {
        set_path(&mut value, path, v.clone());
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{command}: {e}")))
}

/// Resolved parameters plus the inputs a command read. Paths are stored
/// relative to the output directory so parallel layouts give identical
/// snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<T> {
    pub command: String,
    pub version: String,
    pub inputs: Vec<(String, String)>,
    pub params: T,
}

impl<T: Serialize> RunConfig<T> {
    pub fn new(command: &str, params: T) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            params,
        }
    }

    pub fn input(mut self, name: &str, path: &Path, out_dir: &Path) -> Self {
        self.inputs.push((name.to_string(), relative_to(path, out_dir)));
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(SNAPSHOT_FILE);
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str, producer: &str) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            what: what.into(),
            path: path.to_path_buf(),
            producer: producer.into(),
        });
    }
    serde_json::from_reader(File::open(path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn absolute(p: &Path) -> PathBuf {
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    };
    let mut out = PathBuf::new();
    for c in joined.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// `path` expressed relative to `base`, with `/` separators.
pub fn relative_to(path: &Path, base: &Path) -> String {
    let p = absolute(path);
    let b = absolute(base);
    let pc: Vec<Component> = p.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = pc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut parts: Vec<String> = vec!["..".to_string(); bc.len() - common];
    parts.extend(pc[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    if parts.is_empty() {
        ".".into()
    } else {
        parts.join("/")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Inner {
        rounds: usize,
        rate: f64,
    }

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Params {
        seed: u64,
        inner: Inner,
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 3, "inner": {"rounds": 7}}"#).unwrap();
        let mut o = Overrides::new();
        o.set("inner.rate", Some(0.5)).set("seed", None::<u64>);
        let p: Params = resolve("x", Some(&file), &o).unwrap();
        assert_eq!(p, Params { seed: 3, inner: Inner { rounds: 7, rate: 0.5 } });
    }

    #[test]
    fn assignments_parse_json_or_strings() {
        let mut o = Overrides::new();
        o.assign("inner.rounds=12").unwrap();
        let p: Params = resolve("x", None, &o).unwrap();
        assert_eq!(p.inner.rounds, 12);
        assert!(Overrides::new().assign("novalue").is_err());
        let mut o = Overrides::new();
        o.assign("seed=abc").unwrap();
        assert!(resolve::<Params>("x", None, &o).is_err());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"sed": 3}"#).unwrap();
        let err = resolve::<Params>("x", Some(&file), &Overrides::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn snapshots_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = Params { seed: 9, inner: Inner { rounds: 2, rate: 0.1 } };
        let snap = RunConfig::new("train", &params).write(dir.path()).unwrap();
        let p: Params = resolve("train", Some(&snap), &Overrides::new()).unwrap();
        assert_eq!(p, params);
        assert!(resolve::<Params>("bench", Some(&snap), &Overrides::new()).is_err());
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative_to(Path::new("/a/b/c.csv"), Path::new("/a/d")), "../b/c.csv");
        assert_eq!(relative_to(Path::new("/a/b"), Path::new("/a/b")), ".");
        assert_eq!(relative_to(Path::new("/a/./b/../x"), Path::new("/a")), "x");
    }
}
