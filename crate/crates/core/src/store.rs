//! Corpus loading, run manifests and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answers::ReferenceDoc;
use crate::error::{Error, Result};
use crate::model::{GenerationConfig, IterationRecord, RunTrace, StoryState};
use crate::pipeline::ModelRoles;

/// Every `.txt` file directly under `dir`, in byte order of file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<ReferenceDoc>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::parse(&path, "file name is not UTF-8"))?;
        if text.trim().is_empty() {
            log::warn!("skipping empty corpus file {}", path.display());
            continue;
        }
        docs.push(ReferenceDoc::new(name, &text, &path.to_string_lossy())?);
    }
    if docs.is_empty() {
        return Err(Error::Config(format!(
            "corpus directory {} has no non-empty .txt files",
            dir.display()
        )));
    }
    Ok(docs)
}

/// SHA-256 over each document's id and bytes, length-prefixed, in order.
pub fn corpus_fingerprint(docs: &[ReferenceDoc]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        for part in [d.doc_id.as_bytes(), d.text.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
    }
    hex::encode(h.finalize())
}

/// Writes to a temporary file in the target directory, then renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::parse(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Edgar,
    Bbart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: uuid::Uuid,
    /// UTC, RFC 3339.
    pub created_at: String,
    pub generator: Generator,
    pub config: GenerationConfig,
    pub backend_url: String,
    pub models: ModelRoles,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_fingerprint: Option<String>,
    pub ending: String,
    pub iterations: Vec<IterationRecord>,
    pub final_story: Vec<String>,
    /// Set when the run stopped early; `iterations` then holds what finished.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        generator: Generator,
        config: &GenerationConfig,
        backend_url: &str,
        models: &ModelRoles,
        corpus_fingerprint: Option<String>,
        ending: &str,
        trace: &RunTrace,
        story: &StoryState,
    ) -> Self {
        Self {
            run_id: uuid::Uuid::new_v4(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            generator,
            config: config.clone(),
            backend_url: backend_url.to_string(),
            models: models.clone(),
            corpus_fingerprint,
            ending: ending.to_string(),
            iterations: trace.iterations.clone(),
            final_story: story.sentences().map(|s| s.text().to_string()).collect(),
            error: None,
            outputs: Vec::new(),
        }
    }

    pub fn trace(&self) -> RunTrace {
        RunTrace {
            iterations: self.iterations.clone(),
        }
    }
}

/// Canonical JSON of a trace, the form golden files are compared in.
pub fn trace_json(trace: &RunTrace) -> String {
    let mut s = serde_json::to_string_pretty(trace).expect("trace serializes");
    s.push('\n');
    s
}

/// Files a run writes under `out_dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub manifest: PathBuf,
    pub story: PathBuf,
    pub trace: PathBuf,
}

impl RunPaths {
    pub fn under(out_dir: &Path) -> Self {
        Self {
            manifest: out_dir.join("manifest.json"),
            story: out_dir.join("story.txt"),
            trace: out_dir.join("trace.json"),
        }
    }
}

/// Writes the story, the trace and the manifest (last, listing the other two).
pub fn persist_run(out_dir: &Path, manifest: &mut RunManifest, story: &StoryState) -> Result<RunPaths> {
    let paths = RunPaths::under(out_dir);
    write_atomic(&paths.story, story.render().as_bytes())?;
    write_atomic(&paths.trace, trace_json(&manifest.trace()).as_bytes())?;
    manifest.outputs = [&paths.story, &paths.trace]
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    write_json(&paths.manifest, manifest)?;
    Ok(paths)
}

/// Writes `report` as `<stem>.json` and, if given, CSV rows as `<stem>.csv`.
pub fn emit_report<T: Serialize>(
    out_dir: &Path,
    stem: &str,
    report: &T,
    csv: Option<&[u8]>,
) -> Result<Vec<PathBuf>> {
    let json = out_dir.join(format!("{stem}.json"));
    write_json(&json, report)?;
    let mut out = vec![json];
    if let Some(bytes) = csv {
        let path = out_dir.join(format!("{stem}.csv"));
        write_atomic(&path, bytes)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn sorted_and_filtered() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "b.txt", "bee");
        write(d.path(), "a.txt", "ay");
        write(d.path(), "C.txt", "sea");
        write(d.path(), "notes.md", "skip");
        write(d.path(), "empty.txt", "  \n");
        let docs = load_corpus(d.path()).unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["C.txt", "a.txt", "b.txt"]);
    }

    #[test]
    fn empty_dir_is_config_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(d.path()), Err(Error::Config(_))));
        assert!(matches!(load_corpus(&d.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn fingerprint_tracks_bytes() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a.txt", "one");
        let a = corpus_fingerprint(&load_corpus(d.path()).unwrap());
        let b = corpus_fingerprint(&load_corpus(d.path()).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        write(d.path(), "a.txt", "two");
        assert_ne!(a, corpus_fingerprint(&load_corpus(d.path()).unwrap()));
    }

    #[test]
    fn atomic_write_replaces() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("sub/out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn persist_lists_outputs() {
        let d = tempfile::tempdir().unwrap();
        let story = StoryState::from_ending_text("It ended.").unwrap();
        let mut m = RunManifest::new(
            Generator::Edgar,
            &GenerationConfig::default(),
            "mock://0",
            &ModelRoles::default(),
            None,
            "It ended.",
            &RunTrace::default(),
            &story,
        );
        let paths = persist_run(d.path(), &mut m, &story).unwrap();
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&paths.manifest).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs.len(), 2);
        assert_eq!(std::fs::read_to_string(&paths.story).unwrap(), "It ended.\n");
        let other = RunManifest::new(
            Generator::Edgar,
            &GenerationConfig::default(),
            "mock://0",
            &ModelRoles::default(),
            None,
            "It ended.",
            &RunTrace::default(),
            &story,
        );
        assert_ne!(other.run_id, m.run_id);
    }
}
