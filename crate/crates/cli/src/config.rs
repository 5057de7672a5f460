//! Config files: TOML with one table per subcommand, e.g.
//!
//! ```toml
//! [simulate]
//! k = 2
//! alpha = [0.5, 0.5]
//! prop-diag = 0.9
//!
//! [fit]
//! iters = 2000
//! symmetric-prop = true
//! ```
//!
//! Values are turned into flags placed ahead of the command line's own, so
//! explicit flags win.

use std::path::Path;

use toml::Value;

fn flag_values(key: &str, value: &Value) -> Result<Vec<String>, String> {
    let flag = format!("--{key}");
    let scalar = |v: &Value| -> Result<String, String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Integer(i) => Ok(i.to_string()),
            Value::Float(f) => Ok(f.to_string()),
            other => Err(format!("`{key}`: unsupported value {other}")),
        }
    };
    Ok(match value {
        Value::Boolean(true) => vec![flag],
        Value::Boolean(false) => vec![],
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            vec![flag, parts.join(",")]
        }
        other => vec![flag, scalar(other)?],
    })
}

/// Flags for `command` from the file's table of that name.
pub fn flags_for(path: &Path, command: &str) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc: toml::Table = text
        .parse()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let Some(section) = doc.get(command) else {
        return Ok(Vec::new());
    };
    let table = section
        .as_table()
        .ok_or_else(|| format!("{}: `{command}` must be a table", path.display()))?;
    let mut out = Vec::new();
    for (k, v) in table {
        out.extend(flag_values(k, v)?);
    }
    Ok(out)
}

/// Pulls `--config <path>` (or `--config=<path>`) out of `args` and splices
/// the file's flags in right after the subcommand name.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(config) = config else {
        return Ok(rest);
    };
    // first non-flag after the program name is the subcommand
    let Some(pos) = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(rest);
    };
    let injected = flags_for(Path::new(&config), &rest[pos])?;
    let tail = rest.split_off(pos + 1);
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}
