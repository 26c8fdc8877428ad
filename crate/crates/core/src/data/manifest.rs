use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!(
                "unknown split {s:?} (expected train, dev or test)"
            ))),
        }
    }
}

/// Tab-separated `<relative-path>\t<split>` lines; paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<(PathBuf, Split)>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (path, split) = line.split_once('\t').ok_or_else(|| {
                Error::Data(format!(
                    "manifest line {}: expected <path><TAB><split>",
                    lineno + 1
                ))
            })?;
            let split: Split = split.trim().parse().map_err(|_| {
                Error::Data(format!("manifest line {}: bad split {split:?}", lineno + 1))
            })?;
            let path = PathBuf::from(path);
            if !seen.insert(path.clone()) {
                return Err(Error::Data(format!(
                    "manifest line {}: {} listed twice",
                    lineno + 1,
                    path.display()
                )));
            }
            entries.push((path, split));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(p, s)| format!("{}\t{s}\n", p.display()))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn paths(&self, split: Split) -> impl Iterator<Item = &Path> {
        self.entries
            .iter()
            .filter(move |(_, s)| *s == split)
            .map(|(p, _)| p.as_path())
    }

    pub fn count(&self, split: Split) -> usize {
        self.paths(split).count()
    }
}
