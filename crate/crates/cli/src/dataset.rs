//! Dataset loading shared by the train/eval/path commands.

use anyhow::{bail, Context};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use steercloud::data::split::{read_manifest, DatasetSplit, SplitKind};
use steercloud::data::store::{load_sequence, StoredSequence};
use steercloud::training::{prepare_samples, window_sequence, FramePrep, PreparedSample};

/// A dataset directory resolved through its manifest.
pub struct LoadedDataset {
    pub root: PathBuf,
    pub split: DatasetSplit,
    pub sequences: BTreeMap<String, StoredSequence>,
}

pub fn load_dataset(root: &Path) -> anyhow::Result<LoadedDataset> {
    let manifest = root.join("manifest.txt");
    let split = read_manifest(&manifest)
        .with_context(|| format!("reading dataset manifest {}", manifest.display()))?;
    let mut sequences = BTreeMap::new();
    for name in split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
    {
        let dir = root.join(name);
        let seq = load_sequence(&dir)
            .with_context(|| format!("loading sequence {}", dir.display()))?;
        sequences.insert(name.clone(), seq);
    }
    Ok(LoadedDataset {
        root: root.to_path_buf(),
        split,
        sequences,
    })
}

impl LoadedDataset {
    pub fn sequence(&self, name: &str) -> anyhow::Result<&StoredSequence> {
        match self.sequences.get(name) {
            Some(s) => Ok(s),
            None => bail!(
                "sequence '{name}' is not in the manifest (have: {})",
                self.sequences.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        }
    }

    /// Windows and prepares every sequence of a split.
    pub fn prepare_split(
        &self,
        kind: SplitKind,
        prep: &FramePrep,
        horizon: usize,
    ) -> anyhow::Result<Vec<PreparedSample>> {
        let mut samples = Vec::new();
        for name in self.split.names(kind) {
            let seq = self.sequence(name)?;
            let truth: Vec<Option<f64>> = seq.truth.iter().map(|&t| Some(t)).collect();
            let windows = window_sequence(&seq.clouds, &truth, horizon);
            samples.extend(prepare_samples(&windows, prep)?);
        }
        if samples.is_empty() {
            bail!(
                "split '{}' produced no training windows (horizon too long?)",
                kind.as_str()
            );
        }
        Ok(samples)
    }

    /// Feature width the pipeline produces for this dataset.
    pub fn input_width(&self, prep: &FramePrep) -> anyhow::Result<usize> {
        let seq = self
            .sequences
            .values()
            .next()
            .context("dataset has no sequences")?;
        let cloud = seq.clouds.first().context("sequence has no frames")?;
        Ok(prep.input_width_for(cloud))
    }
}
