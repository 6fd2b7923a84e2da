//! Config file overlay: file keys become flags unless already given.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

const SUBCOMMANDS: [&str; 10] = ["ca", "cosigner", "mirror", "distributor", "issue", "verify", "revoke", "demo", "bench", "tables"];
const GLOBAL_WITH_VALUE: [&str; 2] = ["--config", "--log"];

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn subcommand(argv: &[String]) -> Option<&str> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if GLOBAL_WITH_VALUE.contains(&a) {
            i += 2;
            continue;
        }
        if SUBCOMMANDS.contains(&a) {
            return Some(a);
        }
        if !a.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

pub fn load_file(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Returns `argv` with flags from the `--config` file appended.
pub fn apply(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&strings) else { return Ok(argv) };
    let file = load_file(Path::new(&path))?;
    let Value::Object(top) = file else { return Err(format!("{path}: expected a table of flags")) };
    let sub = subcommand(&strings);

    let mut keys: Vec<(String, Value)> = top.iter().filter(|(k, v)| !v.is_object() && !SUBCOMMANDS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
    if let Some(Value::Object(section)) = sub.and_then(|s| top.get(s)) {
        for (k, v) in section {
            keys.retain(|(existing, _)| existing != k);
            keys.push((k.clone(), v.clone()));
        }
    }

    let mut out = argv;
    for (key, value) in keys {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let given = strings.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match &value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    let v = scalar(item).ok_or_else(|| format!("{path}: {key}: list items must be strings or numbers"))?;
                    out.push(flag.clone().into());
                    out.push(v.into());
                }
            }
            v => {
                let v = scalar(v).ok_or_else(|| format!("{path}: {key}: unsupported value"))?;
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(a: &[&str]) -> Vec<OsString> {
        a.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_override_file_and_sections_override_top_level() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mtc.toml");
        std::fs::write(
            &p,
            "listen = \":1\"\npolicy_k = 3\n[ca]\nlisten = \":2\"\ncosigner_url = [\"http://a\", \"http://b\"]\nrequire_mirror = true\n",
        )
        .unwrap();
        let out = apply(argv(&["mtc", "--config", p.to_str().unwrap(), "ca", "--policy-k", "1"])).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert!(s.windows(2).any(|w| w == ["--listen", ":2"]));
        assert!(!s.iter().any(|a| a == ":1"));
        assert_eq!(s.iter().filter(|a| *a == "--policy-k").count(), 1);
        assert_eq!(s.iter().filter(|a| *a == "--cosigner-url").count(), 2);
        assert!(s.contains(&"--require-mirror".to_string()));
    }

    #[test]
    fn json_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mtc.json");
        std::fs::write(&p, r#"{"tables": {"format": "csv"}}"#).unwrap();
        let out = apply(argv(&["mtc", "tables", "--config", p.to_str().unwrap()])).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn no_config_is_identity() {
        let a = argv(&["mtc", "tables"]);
        assert_eq!(apply(a.clone()).unwrap(), a);
    }
}
