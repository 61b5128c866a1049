//! Flat `key=value` configuration files. Keys are flag names with `_` or `-`;
//! values fill in flags that were not given on the command line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use canecov_core::params_io::parse_key_values;
use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::UsageError;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn unquote(v: &str) -> &str {
    for q in ['"', '\''] {
        if let Some(inner) = v.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            return inner;
        }
    }
    v
}

/// Returns `argv` extended with flags taken from the `--config` file, if any.
pub fn merge_config_file(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {}", path.display()))?;
    let pairs = parse_key_values(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;

    let root = Cli::command();
    let sub = argv
        .iter()
        .skip(1)
        .find_map(|a| root.find_subcommand(a.to_string_lossy().as_ref()).cloned());
    let known: Vec<clap::Arg> = root
        .get_arguments()
        .chain(sub.iter().flat_map(|s| s.get_arguments()))
        .filter(|a| a.get_long().is_some())
        .cloned()
        .collect();
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_owned())
        .collect();

    let mut out = argv.clone();
    for (key, value) in pairs {
        let name = key.replace('_', "-");
        if name == "config" {
            continue;
        }
        let Some(arg) = known.iter().find(|a| a.get_long() == Some(name.as_str())) else {
            return Err(UsageError(format!("{}: unknown key `{key}` for this command", path.display())).into());
        };
        if given.contains(&name) {
            continue;
        }
        let value = unquote(&value);
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                "true" => out.push(format!("--{name}").into()),
                "false" => {}
                other => {
                    return Err(UsageError(format!("{}: `{key}` expects true or false, got `{other}`", path.display())).into())
                }
            },
            _ => {
                out.push(format!("--{name}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}
