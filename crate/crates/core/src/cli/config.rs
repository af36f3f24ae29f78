//! `key = value` configuration files merged underneath command-line flags.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

use super::CliError;

/// One `key = value` entry with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses line-oriented `key = value` text. `#` starts a comment; blank
/// lines are ignored; keys may use `_` or `-`.
pub fn parse_config_text(text: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn to_strings(argv: Vec<OsString>) -> Result<Vec<String>, CliError> {
    argv.into_iter()
        .map(|a| {
            a.into_string()
                .map_err(|a| CliError::Usage(format!("argument {a:?} is not valid UTF-8")))
        })
        .collect()
}

fn config_path(args: &[String]) -> Result<Option<(String, usize)>, CliError> {
    for (i, a) in args.iter().enumerate().skip(1) {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return match args.get(i + 1) {
                Some(v) => Ok(Some((v.clone(), i + 1))),
                None => Err(CliError::Usage("--config requires a file path".into())),
            };
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Ok(Some((v.to_string(), i)));
        }
    }
    Ok(None)
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter().any(|a| *a == long || a.starts_with(&with_value))
}

/// Inserts the entries of the `--config` file (if any) right after the
/// subcommand name as `--key=value` arguments. Keys also given as flags are
/// dropped so that flags win. Unknown keys are usage errors.
pub fn merge_config_file(cmd: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let args = to_strings(argv)?;
    let Some((path, value_idx)) = config_path(&args)? else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let sub_idx = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| !a.starts_with('-') && *i != value_idx)
        .map(|(i, _)| i);
    let Some(sub_idx) = sub_idx else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let Some(sub) = cmd.find_subcommand(&args[sub_idx]) else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config file {path}: {e}")))?;
    let entries = parse_config_text(&text).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
    let mut injected = Vec::new();
    for Entry { line, key, value } in entries {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .filter(|a| a.get_long() != Some("config") && a.get_long() != Some("help"));
        let Some(arg) = arg else {
            return Err(CliError::Usage(format!(
                "{path}: line {line}: unknown key `{key}` for `{}`",
                sub.get_name()
            )));
        };
        if flag_given(&args[1..], &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "{path}: line {line}: `{key}` expects true or false, got `{other}`"
                    )))
                }
            }
        }
    }
    let mut out = args;
    out.splice(sub_idx + 1..sub_idx + 1, injected);
    Ok(out.into_iter().map(OsString::from).collect())
}
