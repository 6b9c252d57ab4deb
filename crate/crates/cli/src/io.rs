//! Config resolution and all-or-nothing output directories.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use afnet::config;
use afnet::training::TrainConfig;
use afnet::{Error, Result};

use crate::ConfigArgs;

/// Environment variable that overrides the seed of any run.
pub const SEED_ENV: &str = "AFNET_SEED";

/// Splits `--key value` / `--key=value` tokens into pairs. Hyphens in keys
/// are read as underscores.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(Error::Config(format!(
                "unexpected argument {tok:?}; overrides are --key value"
            )));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Pulls every `--key value` / `--key=value` whose key is a configuration
/// key out of `args`, so overrides may sit anywhere among the other flags.
/// Everything after a bare `--` is left alone.
pub fn split_overrides(args: impl IntoIterator<Item = OsString>) -> (Vec<OsString>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let key = arg.to_str().and_then(|a| a.strip_prefix("--")).map(|f| {
            let name = f.split_once('=').map_or(f, |(k, _)| k);
            (name.replace('-', "_"), f.contains('='))
        });
        match key {
            Some((k, inline)) if config::KEYS.contains(&k.as_str()) => {
                overrides.push(arg.to_string_lossy().into_owned());
                if !inline {
                    if let Some(v) = it.next() {
                        overrides.push(v.to_string_lossy().into_owned());
                    }
                }
            }
            _ if arg == "--" => {
                rest.push(arg);
                rest.extend(it.by_ref());
            }
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}

/// Defaults, then the config file, then `AFNET_SEED`, then flags.
pub fn resolve(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config::apply_text(&mut cfg, &text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config::apply(&mut cfg, "seed", &seed).map_err(|e| Error::Config(format!("{SEED_ENV}: {e}")))?;
    }
    for (k, v) in parse_overrides(&args.overrides)? {
        config::apply(&mut cfg, &k, &v).map_err(|e| Error::Config(format!("--{k}: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A hidden sibling of the output directory that only becomes visible once
/// every file has been written. Dropped without [`Staging::commit`], it is
/// removed.
pub struct Staging {
    dir: PathBuf,
    out: PathBuf,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = out
            .file_name()
            .ok_or_else(|| Error::Config(format!("{} is not a usable output path", out.display())))?;
        if out.exists() && !out.is_dir() {
            return Err(Error::Data(format!("{} exists and is not a directory", out.display())));
        }
        let dir = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            dir,
            out: out.to_path_buf(),
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Moves the staged files into place. An existing output directory keeps
    /// any unrelated files; same-named ones are replaced.
    pub fn commit(self) -> Result<()> {
        if !self.out.exists() {
            fs::rename(&self.dir, &self.out)?;
            return Ok(());
        }
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            fs::rename(entry.path(), self.out.join(entry.file_name()))?;
        }
        fs::remove_dir(&self.dir)?;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.dir.exists() {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// `path` itself if it is a file, else the PNGs directly inside it, sorted.
pub fn png_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    out.sort();
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no PNG images", path.display())));
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn overrides_both_spellings() {
        let got = parse_overrides(&toks(&["--epochs", "0", "--rdb-count=3", "--lr0", "-1"])).unwrap();
        assert_eq!(
            got,
            vec![
                ("epochs".into(), "0".into()),
                ("rdb_count".into(), "3".into()),
                ("lr0".into(), "-1".into())
            ]
        );
    }

    #[test]
    fn overrides_reject_strays() {
        assert!(parse_overrides(&toks(&["epochs", "3"])).is_err());
        assert!(parse_overrides(&toks(&["--epochs"])).is_err());
    }

    #[test]
    fn split_keeps_clap_flags() {
        let args = [
            "afnet",
            "train",
            "--epochs",
            "0",
            "--out",
            "r",
            "--rdb-count=2",
            "--data",
            "d",
        ];
        let (rest, over) = split_overrides(args.iter().map(OsString::from));
        assert_eq!(rest, ["afnet", "train", "--out", "r", "--data", "d"]);
        assert_eq!(over, ["--epochs", "0", "--rdb-count=2"]);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        {
            let s = Staging::new(&out).unwrap();
            fs::write(s.path("a.txt"), "x").unwrap();
        }
        assert!(!out.exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_merges_into_existing() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        fs::create_dir(&out).unwrap();
        fs::write(out.join("keep.txt"), "k").unwrap();
        fs::write(out.join("a.txt"), "old").unwrap();
        let s = Staging::new(&out).unwrap();
        fs::write(s.path("a.txt"), "new").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "new");
        assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "k");
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    }
}
