//! Named artifacts in a working directory and the stages that produce them.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    BuildGraph,
    Embed,
    Centers,
    Retrieve,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::BuildGraph,
        Stage::Embed,
        Stage::Centers,
        Stage::Retrieve,
        Stage::Train,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::BuildGraph => "build-graph",
            Stage::Embed => "embed",
            Stage::Centers => "centers",
            Stage::Retrieve => "retrieve",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Artifact {
    Corpus,
    Truth,
    Graph,
    Embeddings,
    EmbedLoss,
    Silhouette,
    Store,
    Retrievals,
    Checkpoint,
    LossCurve,
    Report,
    Scores,
}

impl Artifact {
    pub const ALL: [Artifact; 12] = [
        Artifact::Corpus,
        Artifact::Truth,
        Artifact::Graph,
        Artifact::Embeddings,
        Artifact::EmbedLoss,
        Artifact::Silhouette,
        Artifact::Store,
        Artifact::Retrievals,
        Artifact::Checkpoint,
        Artifact::LossCurve,
        Artifact::Report,
        Artifact::Scores,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::Corpus => "corpus.log",
            Artifact::Truth => "truth.tsv",
            Artifact::Graph => "graph.bin",
            Artifact::Embeddings => "embeddings.bin",
            Artifact::EmbedLoss => "embed_loss.tsv",
            Artifact::Silhouette => "silhouette.tsv",
            Artifact::Store => "store.bin",
            Artifact::Retrievals => "retrievals.tsv",
            Artifact::Checkpoint => "model.ckpt",
            Artifact::LossCurve => "train_loss.tsv",
            Artifact::Report => "report.tsv",
            Artifact::Scores => "scores.tsv",
        }
    }

    /// The stage that writes this artifact. The corpus can also come from
    /// `ingest`.
    pub fn producer(self) -> Stage {
        match self {
            Artifact::Corpus | Artifact::Truth => Stage::Synth,
            Artifact::Graph => Stage::BuildGraph,
            Artifact::Embeddings | Artifact::EmbedLoss | Artifact::Silhouette => Stage::Embed,
            Artifact::Store => Stage::Centers,
            Artifact::Retrievals => Stage::Retrieve,
            Artifact::Checkpoint | Artifact::LossCurve => Stage::Train,
            Artifact::Report | Artifact::Scores => Stage::Eval,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("missing artifact {} ({}); run stage `{stage}` first{alt}", artifact.file_name(), path.display())]
pub struct MissingArtifact {
    pub artifact: Artifact,
    pub stage: Stage,
    pub path: PathBuf,
    alt: &'static str,
}

/// Writes `bytes` to a temporary file beside `path`, syncs it, then renames
/// it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, a: Artifact) -> PathBuf {
        self.root.join(a.file_name())
    }

    pub fn exists(&self, a: Artifact) -> bool {
        self.path(a).is_file()
    }

    pub fn require(&self, a: Artifact) -> Result<PathBuf, MissingArtifact> {
        let path = self.path(a);
        if path.is_file() {
            Ok(path)
        } else {
            Err(MissingArtifact {
                artifact: a,
                stage: a.producer(),
                path,
                alt: if a == Artifact::Corpus { " (or `ingest`)" } else { "" },
            })
        }
    }

    pub fn read(&self, a: Artifact) -> Result<Vec<u8>> {
        let path = self.require(a)?;
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }

    pub fn write(&self, a: Artifact, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(a);
        atomic_write(&path, bytes)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("deploy".parse::<Stage>().is_err());
    }

    #[test]
    fn missing_corpus_mentions_both_producers() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let msg = ws.require(Artifact::Corpus).unwrap_err().to_string();
        assert!(msg.contains("`synth`") && msg.contains("`ingest`"), "{msg}");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.bin");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
