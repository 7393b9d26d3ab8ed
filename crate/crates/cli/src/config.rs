use std::collections::BTreeMap;
use std::ffi::OsString;

use clap::{ArgAction, ArgMatches, Command};

use crate::args::{GLOBAL_VALUE_FLAGS, UNRECORDED};
use crate::error::CliError;

/// Parses a flat `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", no + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", no + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Names of the selected subcommands, outermost first.
pub fn command_path(m: &ArgMatches) -> Vec<String> {
    let mut path = Vec::new();
    let mut cur = m;
    while let Some((name, sub)) = cur.subcommand() {
        path.push(name.to_string());
        cur = sub;
    }
    path
}

fn leaf<'a>(root: &'a Command, path: &[String]) -> &'a Command {
    path.iter().fold(root, |c, name| c.find_subcommand(name).expect("parsed subcommand exists"))
}

fn leaf_matches(m: &ArgMatches) -> &ArgMatches {
    let mut cur = m;
    while let Some((_, sub)) = cur.subcommand() {
        cur = sub;
    }
    cur
}

/// Config pairs as flags, split into global ones and those of the selected
/// subcommand. Keys the subcommand does not know are rejected.
pub struct ConfigFlags {
    pub global: Vec<OsString>,
    pub local: Vec<OsString>,
}

pub fn pairs_to_flags(root: &Command, path: &[String], pairs: &[(String, String)]) -> Result<ConfigFlags, CliError> {
    let cmd = leaf(root, path);
    let mut out = ConfigFlags { global: Vec::new(), local: Vec::new() };
    for (key, value) in pairs {
        if key == "config" {
            return Err(CliError::Config("a config file cannot name another".into()));
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()) && a.get_id() != "help" && a.get_id() != "version")
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}` for `{}`", path.join(" "))))?;
        let flags = if arg.is_global_set() { &mut out.global } else { &mut out.local };
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" | "1" | "yes" => flags.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                _ => return Err(CliError::Config(format!("`{key}` expects true or false, got `{value}`"))),
            }
        } else {
            flags.push(OsString::from(format!("--{key}")));
            flags.push(OsString::from(value));
        }
    }
    Ok(out)
}

/// Puts global config flags first and subcommand ones right after the leaf
/// subcommand token, so every flag typed on the command line comes later and
/// wins.
pub fn splice(argv: &[OsString], path: &[String], extra: ConfigFlags) -> Vec<OsString> {
    let mut pos = 0;
    let mut want = path.iter();
    let mut next = want.next();
    for i in 1..argv.len() {
        let Some(name) = next else { break };
        let prev_takes_value = GLOBAL_VALUE_FLAGS.iter().any(|f| argv[i - 1] == *f);
        if !prev_takes_value && argv[i] == name.as_str() {
            pos = i;
            next = want.next();
        }
    }
    let mut out = vec![argv[0].clone()];
    out.extend(extra.global);
    out.extend_from_slice(&argv[1..=pos]);
    out.extend(extra.local);
    out.extend_from_slice(&argv[pos + 1..]);
    out
}

/// Every recorded setting of the run: the command path, the version, the
/// global seed and format, and each subcommand argument as its raw value.
pub fn resolved(root: &Command, m: &ArgMatches) -> BTreeMap<String, String> {
    let path = command_path(m);
    let cmd = leaf(root, &path);
    let lm = leaf_matches(m);
    let mut meta = BTreeMap::new();
    meta.insert("command".to_string(), path.join(" "));
    meta.insert("version".to_string(), env!("CARGO_PKG_VERSION").to_string());
    for id in ["seed", "format"] {
        if let Ok(Some(v)) = m.try_get_raw(id) {
            meta.insert(id.to_string(), join(v));
        }
    }
    for a in cmd.get_arguments() {
        let id = a.get_id().as_str();
        if a.is_global_set() || UNRECORDED.contains(&id) || id == "help" || id == "version" {
            continue;
        }
        let key = a.get_long().unwrap_or(id).to_string();
        if let Ok(Some(v)) = lm.try_get_raw(id) {
            meta.insert(key, join(v));
        }
    }
    meta
}

fn join(v: clap::parser::RawValues<'_>) -> String {
    v.map(|x| x.to_string_lossy().into_owned()).collect::<Vec<_>>().join(",")
}
