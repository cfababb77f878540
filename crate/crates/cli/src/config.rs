//! `key = value` config files, merged into the argument list so that flags
//! given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const DATA_DIR_ENV: &str = "TQST_DATA_DIR";

/// `$TQST_DATA_DIR`, or `./data` when unset.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_flags(entries: &[(String, String)]) -> Vec<String> {
    let mut flags = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => {
                flags.push(format!("--{k}"));
                flags.push(v.clone());
            }
        }
    }
    flags
}

/// Pulls `--config FILE` out of `args` and splices the file's entries in
/// right after the subcommand name, ahead of the user's own flags.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config: Option<PathBuf> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().context("--config needs a path")?.into());
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let flags = config_flags(&read_config(&path)?);
    let Some(sub) = rest.iter().skip(1).position(|a| !a.starts_with('-')) else {
        return Ok(rest);
    };
    let at = sub + 2;
    rest.splice(at..at, flags);
    Ok(rest)
}

fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_and_normalizes_keys() {
        let c = parse_config("# comment\nper_pair = 20\nseed=3 # trailing\n\nforce = true\n").unwrap();
        assert_eq!(c, vec![("per-pair".into(), "20".into()), ("seed".into(), "3".into()), ("force".into(), "true".into())]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn config_entries_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 3\nepochs = 5\nverbose = false\n").unwrap();
        let args = s(&["tqst", "--config", path.to_str().unwrap(), "train", "--seed", "9"]);
        assert_eq!(
            expand_args(args).unwrap(),
            s(&["tqst", "train", "--seed", "3", "--epochs", "5", "--seed", "9"])
        );
    }
}
