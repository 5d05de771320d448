//! Train/validation/test assignment of named sequences.

use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::Parse(format!("unknown split '{other}'"))),
        }
    }
}

/// Disjoint sequence-name assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn names(&self, kind: SplitKind) -> &[String] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

/// Builds a split from explicit assignments, rejecting duplicates and empty
/// test sets.
pub fn split_dataset(assignment: &[(String, SplitKind)]) -> Result<DatasetSplit> {
    let mut split = DatasetSplit::default();
    let mut seen = std::collections::BTreeSet::new();
    for (name, kind) in assignment {
        if !seen.insert(name.clone()) {
            return Err(Error::OverlappingSplit(name.clone()));
        }
        match kind {
            SplitKind::Train => split.train.push(name.clone()),
            SplitKind::Val => split.val.push(name.clone()),
            SplitKind::Test => split.test.push(name.clone()),
        }
    }
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if split.test.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }
    Ok(split)
}

/// Default recipe mirroring the 12/2/1 sequence ratio: the first
/// `12/15` of the names train, the next `2/15` validate, the rest test.
/// With exactly 15 names this is 12/2/1.
pub fn default_split(names: &[String]) -> Result<DatasetSplit> {
    if names.len() < 3 {
        return Err(Error::InvalidConfig(
            "need at least 3 sequences for a 12/2/1-style split".into(),
        ));
    }
    let n = names.len();
    let n_test = (n / 15).max(1);
    let n_val = (n * 2 / 15).max(1);
    let n_train = n - n_val - n_test;
    let assignment: Vec<(String, SplitKind)> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let kind = if i < n_train {
                SplitKind::Train
            } else if i < n_train + n_val {
                SplitKind::Val
            } else {
                SplitKind::Test
            };
            (name.clone(), kind)
        })
        .collect();
    split_dataset(&assignment)
}

/// Writes the manifest format: one `<split> <sequence-dir>` line each.
pub fn write_manifest(split: &DatasetSplit) -> String {
    let mut out = String::new();
    for (kind, names) in [
        (SplitKind::Train, &split.train),
        (SplitKind::Val, &split.val),
        (SplitKind::Test, &split.test),
    ] {
        for name in names {
            out.push_str(&format!("{} {}\n", kind.as_str(), name));
        }
    }
    out
}

/// Parses a manifest file's text.
pub fn parse_manifest(text: &str) -> Result<DatasetSplit> {
    let mut assignment = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, name) = line.split_once(' ').ok_or_else(|| {
            Error::Parse(format!("manifest line {}: expected '<split> <dir>'", lineno + 1))
        })?;
        assignment.push((name.trim().to_string(), SplitKind::parse(kind)?));
    }
    split_dataset(&assignment)
}

/// Reads and parses a manifest file.
pub fn read_manifest(path: &Path) -> Result<DatasetSplit> {
    parse_manifest(&std::fs::read_to_string(path)?)
}
