//! Versioned artifact store for one run.
//!
//! Every write appends a new version of a path; nothing is overwritten. With
//! a root directory the latest versions are mirrored to `{root}/{path}`, the
//! full history to `{root}/.history/{path}/{version}`, and sprint snapshots to
//! `{snapshots}/sprint-{n}.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::CodeBundle;
use crate::pool::MessageKind;

pub const HISTORY_DIR: &str = ".history";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("path escapes the workspace: {0}")]
    PathEscape(String),
    #[error("snapshot for sprint {0} already exists")]
    DuplicateSnapshot(u32),
    #[error("snapshot references {path} v{version}, which is not in history")]
    UnknownVersion { path: String, version: u32 },
    #[error("workspace io: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("snapshot encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

/// Lowercase hex SHA-256 of the raw bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub kind: MessageKind,
    pub version: u32,
    #[serde(skip)]
    pub content: Vec<u8>,
    pub content_hash: String,
}

impl Artifact {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.content).into_owned()
    }

    pub fn is_code(&self) -> bool {
        self.kind == MessageKind::CodeBundle
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: MessageKind,
    pub version: u32,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sprint_index: u32,
    pub manifest: Vec<ManifestEntry>,
    /// Seconds since the Unix epoch, or a logical clock under playback.
    pub created_at: u64,
}

/// S1/S2 plus the all-artifact file count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCount {
    pub files: u64,
    pub loc: u64,
    pub artifact_files: u64,
}

/// Non-blank lines: lines with at least one non-whitespace character.
pub fn count_loc(content: &[u8]) -> u64 {
    String::from_utf8_lossy(content).lines().filter(|l| !l.trim().is_empty()).count() as u64
}

/// Accepts only plain relative paths below the workspace root.
pub fn check_path(path: &str) -> Result<(), WorkspaceError> {
    let bad = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.contains(':')
        || path.split('/').any(|s| s.is_empty() || s == "." || s == "..")
        || path.split('/').next() == Some(HISTORY_DIR);
    if bad {
        Err(WorkspaceError::PathEscape(path.to_string()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Workspace {
    root: Option<PathBuf>,
    snapshot_dir: Option<PathBuf>,
    history: BTreeMap<String, Vec<Artifact>>,
    snapshots: BTreeMap<u32, Snapshot>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

impl Workspace {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// A workspace mirrored to disk. Both directories are created if needed.
    pub fn on_disk(root: impl Into<PathBuf>, snapshot_dir: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let snapshot_dir = snapshot_dir.into();
        std::fs::create_dir_all(&root)?;
        Ok(Workspace { root: Some(root), snapshot_dir: Some(snapshot_dir), ..Default::default() })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn write(&mut self, path: &str, kind: MessageKind, content: impl Into<Vec<u8>>) -> Result<Artifact, WorkspaceError> {
        check_path(path)?;
        let content = content.into();
        let versions = self.history.entry(path.to_string()).or_default();
        let artifact = Artifact {
            path: path.to_string(),
            kind,
            version: versions.len() as u32 + 1,
            content_hash: content_hash(&content),
            content,
        };
        if let Some(root) = &self.root {
            let hist = root.join(HISTORY_DIR).join(path).join(artifact.version.to_string());
            write_atomic(&hist, &artifact.content)?;
            write_atomic(&root.join(path), &artifact.content)?;
        }
        versions.push(artifact.clone());
        Ok(artifact)
    }

    /// Writes every file of a bundle. All paths are checked before anything
    /// is written.
    pub fn write_bundle(&mut self, bundle: &CodeBundle) -> Result<Vec<Artifact>, WorkspaceError> {
        for f in &bundle.files {
            check_path(&f.path)?;
        }
        bundle
            .files
            .iter()
            .map(|f| self.write(&f.path, MessageKind::CodeBundle, f.content.as_bytes()))
            .collect()
    }

    pub fn latest(&self, path: &str) -> Option<&Artifact> {
        self.history.get(path).and_then(|v| v.last())
    }

    pub fn version(&self, path: &str, version: u32) -> Option<&Artifact> {
        self.history.get(path).and_then(|v| v.get(version.checked_sub(1)? as usize))
    }

    /// Latest version of every path, in path order.
    pub fn latest_all(&self) -> impl Iterator<Item = &Artifact> {
        self.history.values().filter_map(|v| v.last())
    }

    pub fn code_files(&self) -> impl Iterator<Item = &Artifact> {
        self.latest_all().filter(|a| a.is_code())
    }

    pub fn measure_size(&self) -> SizeCount {
        let mut size = SizeCount::default();
        for a in self.latest_all() {
            size.artifact_files += 1;
            if a.is_code() {
                size.files += 1;
                size.loc += count_loc(&a.content);
            }
        }
        size
    }

    pub fn snapshot(&mut self, sprint_index: u32, created_at: u64) -> Result<Snapshot, WorkspaceError> {
        if self.snapshots.contains_key(&sprint_index) {
            return Err(WorkspaceError::DuplicateSnapshot(sprint_index));
        }
        let manifest = self
            .latest_all()
            .map(|a| ManifestEntry {
                path: a.path.clone(),
                kind: a.kind,
                version: a.version,
                content_hash: a.content_hash.clone(),
            })
            .collect();
        let snap = Snapshot { sprint_index, manifest, created_at };
        if let Some(dir) = &self.snapshot_dir {
            let mut bytes = serde_json::to_vec_pretty(&snap)?;
            bytes.push(b'\n');
            write_atomic(&dir.join(format!("sprint-{sprint_index}.json")), &bytes)?;
        }
        self.snapshots.insert(sprint_index, snap.clone());
        Ok(snap)
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.values()
    }

    /// A fresh in-memory workspace holding exactly the snapshot's file set.
    pub fn restore(&self, snap: &Snapshot) -> Result<Workspace, WorkspaceError> {
        let mut out = Workspace::in_memory();
        for e in &snap.manifest {
            let a = self
                .version(&e.path, e.version)
                .ok_or_else(|| WorkspaceError::UnknownVersion { path: e.path.clone(), version: e.version })?;
            out.write(&e.path, e.kind, a.content.clone())?;
        }
        Ok(out)
    }

    /// Rebuilds a workspace from its on-disk history directory.
    pub fn load(root: &Path, kinds: &BTreeMap<String, MessageKind>) -> Result<Workspace, WorkspaceError> {
        let mut ws = Workspace::in_memory();
        let hist = root.join(HISTORY_DIR);
        let mut found: BTreeMap<String, BTreeMap<u32, PathBuf>> = BTreeMap::new();
        for entry in walkdir::WalkDir::new(&hist).min_depth(2) {
            let entry = entry.map_err(|e| std::io::Error::other(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let Ok(version) = entry.file_name().to_string_lossy().parse::<u32>() else { continue };
            let rel = entry.path().parent().and_then(|p| p.strip_prefix(&hist).ok());
            let Some(rel) = rel else { continue };
            let rel = rel.to_string_lossy().replace('\\', "/");
            found.entry(rel).or_default().insert(version, entry.path().to_path_buf());
        }
        for (path, versions) in found {
            let kind = kinds.get(&path).copied().unwrap_or(MessageKind::CodeBundle);
            for (_, file) in versions {
                ws.write(&path, kind, std::fs::read(file)?)?;
            }
        }
        Ok(ws)
    }
}
