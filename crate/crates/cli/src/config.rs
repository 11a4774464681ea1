//! `--config <file>` support.
//!
//! The file is TOML. Top-level keys are flag names and apply to whichever
//! subcommand has that flag; a table named after a subcommand (`[rank]`,
//! `[eval.ttest]`) applies to that subcommand only and wins over top-level
//! keys. Anything given on the command line wins over the file. The merge
//! works on the raw argument list, so clap still does all parsing and
//! validation.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Arg, Command};
use toml::{Table, Value};

/// Path given with `--config`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Names of the subcommands selected by `args`, outermost first.
fn subcommand_path(cmd: &Command, args: &[OsString]) -> Vec<String> {
    let mut path = Vec::new();
    let mut current = cmd;
    for arg in args.iter().skip(1) {
        let s = arg.to_string_lossy();
        if s.starts_with('-') {
            continue;
        }
        if let Some(sub) = current.find_subcommand(s.as_ref()) {
            path.push(sub.get_name().to_string());
            current = sub;
        }
    }
    path
}

fn given_on_command_line(arg: &Arg, args: &[OsString]) -> bool {
    let long = arg.get_long().map(|l| format!("--{l}"));
    let short = arg.get_short().map(|c| format!("-{c}"));
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        long.as_deref().is_some_and(|l| s == l || s.starts_with(&format!("{l}=")))
            || short.as_deref().is_some_and(|sh| s.starts_with(sh) && !s.starts_with("--"))
    })
}

fn scalar(key: &str, value: &Value) -> Result<String> {
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => bail!("config key {key:?}: unsupported value {other}"),
    })
}

/// Appends `--flag value` for every config entry the command line left out.
pub fn merge(cmd: &Command, args: Vec<OsString>, table: &Table) -> Result<Vec<OsString>> {
    let path = subcommand_path(cmd, &args);
    let mut target = cmd;
    let mut section: Option<&Table> = Some(table);
    for name in &path {
        target = target.find_subcommand(name).expect("path came from this command");
        section = section.and_then(|t| t.get(name)).and_then(Value::as_table);
    }

    // Subcommand-specific keys first, then top-level keys.
    let mut entries: Vec<(&String, &Value)> = Vec::new();
    if let Some(sec) = section.filter(|_| !path.is_empty()) {
        for (key, value) in sec {
            if !value.is_table() && target.get_arguments().all(|a| a.get_long() != Some(key.as_str())) {
                bail!("config section [{}] has unknown key {key:?}", path.join("."));
            }
            entries.push((key, value));
        }
    }
    for (key, value) in table {
        if !value.is_table() && key != "config" && !entries.iter().any(|(k, _)| *k == key) {
            entries.push((key, value));
        }
    }

    let mut out = args.clone();
    for (key, value) in entries {
        if value.is_table() {
            continue;
        }
        let Some(arg) = target.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        if given_on_command_line(arg, &args) {
            continue;
        }
        let flag = format!("--{key}");
        if !arg.get_action().takes_values() {
            if value.as_bool().with_context(|| format!("config key {key:?} must be true or false"))? {
                out.push(flag.into());
            }
            continue;
        }
        let values: Vec<&Value> = match value {
            Value::Array(items) => items.iter().collect(),
            v => vec![v],
        };
        for v in values {
            out.push(flag.clone().into());
            out.push(scalar(key, v)?.into());
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("invalid config {}", path.display()))
}
