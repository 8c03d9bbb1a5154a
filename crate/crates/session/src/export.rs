//! Headless export: one `NNNNNN.snapshot.json` per frame, plus an optional
//! `NNNNNN.ply` holding the full-resolution cloud and the effect geometry.

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use thiserror::Error;

use volfx_core::ply::write_ply;
use volfx_core::{Playback, PlaybackError};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Playback(#[from] PlaybackError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("frame range {start}..{end} is outside the clip (0..{len})")]
    Range { start: u32, end: u32, len: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub frames: u32,
    pub files: Vec<PathBuf>,
}

pub fn snapshot_name(frame: u32) -> String {
    format!("{frame:06}.snapshot.json")
}

pub fn ply_name(frame: u32) -> String {
    format!("{frame:06}.ply")
}

/// Render `range` into `dir`. The session's cursor is restored afterwards.
pub fn export(pb: &mut Playback, dir: &Path, range: Range<u32>, ply: bool) -> Result<ExportSummary, ExportError> {
    if range.is_empty() || range.end > pb.len() {
        return Err(ExportError::Range { start: range.start, end: range.end, len: pb.len() });
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let cursor = pb.cursor();
    let mut files = Vec::new();
    for f in range.clone() {
        let out = if f == range.start { pb.seek(f)? } else { pb.step()? };
        debug_assert_eq!(out.snapshot.frame, f);
        let path = dir.join(snapshot_name(f));
        fs::write(&path, out.snapshot.to_json()).map_err(io(&path))?;
        files.push(path);
        if ply {
            let mut points = pb.cloud(1);
            points.extend(out.snapshot.augmentation_points());
            let path = dir.join(ply_name(f));
            let file = fs::File::create(&path).map_err(io(&path))?;
            let mut w = BufWriter::new(file);
            write_ply(&mut w, &points).and_then(|_| w.flush()).map_err(io(&path))?;
            files.push(path);
        }
    }
    pb.seek(cursor)?;
    Ok(ExportSummary { frames: range.len() as u32, files })
}
