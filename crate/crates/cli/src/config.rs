//! `--config FILE`: `key = value` lines merged into the command line.
//!
//! Keys are long flag names (`_` and `-` are interchangeable). A flag given on
//! the command line wins over the same key in the file. `key = true` becomes a
//! bare `--key`; `key = false` is dropped.

use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Malformed(String),
}

pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Malformed(format!("{} line {}: expected key = value", origin.display(), i + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.starts_with('-') || key == "config" {
            return Err(ConfigError::Malformed(format!("{} line {}: bad key {:?}", origin.display(), i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn mentions(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}=")))
}

/// Removes `--config` from `argv` and splices the file's entries in right
/// after the subcommand name. Entries already present on the command line are skipped.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it.next().ok_or_else(|| ConfigError::Malformed("--config needs a file argument".into()))?;
            path = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let entries = parse(&text, path)?;
    // Position 0 is the program, 1 the subcommand.
    let split = rest.len().min(2);
    let mut extra = Vec::new();
    for (k, v) in entries {
        if mentions(&rest, &k) {
            continue;
        }
        match v.as_str() {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => {
                extra.push(format!("--{k}"));
                extra.push(v);
            }
        }
    }
    let tail = rest.split_off(split);
    rest.extend(extra);
    rest.extend(tail);
    Ok(rest)
}
