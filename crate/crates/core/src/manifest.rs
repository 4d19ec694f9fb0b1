//! Frame manifests: JSON Lines with one `{index, timestamp_s, path, embedding?}`
//! object per frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_frames, FrameRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLine {
    pub index: usize,
    pub timestamp_s: f64,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

fn is_opaque_ref(path: &str) -> bool {
    path.starts_with("mock:") || path.contains("://") || Path::new(path).is_absolute()
}

/// Parses manifest text. Relative paths are joined onto `base_dir`; `mock:`
/// refs, URLs and absolute paths are kept as is. Blank lines are skipped.
pub fn parse_manifest(text: &str, base_dir: Option<&Path>) -> Result<Vec<FrameRecord>> {
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestLine = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("manifest line {}: {e}", lineno + 1)))?;
        let content_ref = match base_dir {
            Some(dir) if !is_opaque_ref(&entry.path) => {
                dir.join(&entry.path).to_string_lossy().into_owned()
            }
            _ => entry.path,
        };
        frames.push(FrameRecord {
            index: entry.index,
            timestamp_s: entry.timestamp_s,
            content_ref,
            embedding: entry.embedding,
        });
    }
    if frames.is_empty() {
        return Err(Error::Data("manifest has no frames".into()));
    }
    validate_frames(&frames)?;
    Ok(frames)
}

pub fn load_manifest(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text, path.parent())
}

/// Keeps `n` evenly spaced frames (position `floor(i * len / n)`) and
/// renumbers them `0..n`. Shorter lists are only renumbered.
pub fn uniform_candidates(frames: Vec<FrameRecord>, n: usize) -> Vec<FrameRecord> {
    let len = frames.len();
    let picked: Vec<FrameRecord> = if len > n {
        (0..n).map(|i| frames[i * len / n].clone()).collect()
    } else {
        frames
    };
    picked
        .into_iter()
        .enumerate()
        .map(|(i, mut f)| {
            f.index = i;
            f
        })
        .collect()
}

pub fn render_manifest(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for f in frames {
        let line = ManifestLine {
            index: f.index,
            timestamp_s: f.timestamp_s,
            path: f.content_ref.clone(),
            embedding: f.embedding.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Mock frames split into consecutive scenes, one scene description each.
/// Frame `i` is `mock:<i>/<scene words>` at `i * spacing_s` seconds.
pub fn synthetic_frames(n: usize, scenes: &[&str], spacing_s: f64) -> Vec<FrameRecord> {
    let k = scenes.len().max(1);
    (0..n)
        .map(|i| {
            let words = scenes.get(i * k / n.max(1)).copied().unwrap_or("");
            FrameRecord::new(i, i as f64 * spacing_s, format!("mock:{i}/{words}"))
        })
        .collect()
}
