//! `--config` files: `key = value` lines, `#` comments, `[section]` headers
//! ignored. Keys map to long flags (`_` becomes `-`); a flag already on the
//! command line wins. `true` inserts a bare flag, `false` nothing.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got {raw:?}", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.push((key, v.to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn has_flag(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let eq = format!("--{key}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&eq))
}

/// Appends config-file flags that the command line does not set.
pub fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    let mut extra = Vec::new();
    for (key, value) in parse_config(&text)? {
        if key == "config" || has_flag(&argv, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                extra.push(format!("--{key}"));
                extra.push(value);
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_lines() {
        let c = parse_config("# run\n[eig]\nk = 12\npotential = \"const:2\"\nplain_mass = true\n").unwrap();
        assert_eq!(c, vec![("k".into(), "12".into()), ("potential".into(), "const:2".into()), ("plain-mass".into(), "true".into())]);
        assert!(parse_config("k 12").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = std::env::temp_dir().join(format!("hamspec-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "k = 12\nmu = 3\nverbose = false\nply = true\n").unwrap();
        let argv = args(&format!("hamspec eig --k 4 --config {}", path.display()));
        let merged = merge_config(argv.clone()).unwrap();
        assert_eq!(&merged[..argv.len()], &argv[..]);
        assert_eq!(&merged[argv.len()..], &args("--mu 3 --ply")[..]);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
