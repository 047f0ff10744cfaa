//! Manifests: tab-separated `path<TAB>text<TAB>split` listings of labelled images.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recognition unit of a dataset or model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    #[default]
    Word,
    Line,
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Unit::Word),
            "line" => Ok(Unit::Line),
            other => Err(Error::Config(format!("unknown unit {other:?} (expected word|line)"))),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Word => "word",
            Unit::Line => "line",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split {other:?} (expected train|val|test)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image path as written in the manifest, relative to the manifest's root.
    pub path: PathBuf,
    pub text: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
    pub unit: Unit,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, unit: Unit) -> Self {
        Manifest {
            root: root.into(),
            unit,
            entries: Vec::new(),
        }
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>, unit: Unit) -> Result<Self> {
        let mut manifest = Manifest::new(root, unit);
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, gt, split] = fields[..] else {
                return Err(Error::InvalidInput(format!(
                    "manifest line {}: expected 3 tab-separated fields, got {}",
                    i + 1,
                    fields.len()
                )));
            };
            let split: Split = split.trim().parse()?;
            if split == Split::Train && gt.is_empty() {
                return Err(Error::InvalidInput(format!("manifest line {}: empty train text", i + 1)));
            }
            manifest.entries.push(ManifestEntry {
                path: PathBuf::from(path),
                text: gt.to_owned(),
                split,
            });
        }
        Ok(manifest)
    }

    /// Reads a manifest; relative image paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>, unit: Unit) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, unit)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.path.display(), e.text, e.split))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Appends another manifest's entries, rebasing their paths onto this root.
    pub fn extend_from(&mut self, other: &Manifest) {
        for e in &other.entries {
            let abs = other.resolve(e);
            let path = abs.strip_prefix(&self.root).map(Path::to_path_buf).unwrap_or(abs);
            self.entries.push(ManifestEntry {
                path,
                text: e.text.clone(),
                split: e.split,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_serialize() {
        let text = "a/1.pgm\thello world\ttrain\n\nb.png\tx\tval\r\n";
        let m = Manifest::parse(text, "/data", Unit::Line).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].text, "hello world");
        assert_eq!(m.entries[1].split, Split::Val);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a/1.pgm"));
        let again = Manifest::parse(&m.to_tsv(), "/data", Unit::Line).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn parse_errors() {
        assert!(Manifest::parse("a\tb\n", ".", Unit::Word).is_err());
        assert!(Manifest::parse("a\tb\tdev\n", ".", Unit::Word).is_err());
        assert!(Manifest::parse("a\t\ttrain\n", ".", Unit::Word).is_err());
        assert!(Manifest::parse("a\t\ttest\n", ".", Unit::Word).is_ok());
    }
}
