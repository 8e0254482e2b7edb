// SPDX-License-Identifier: Apache-2.0

//! Source loading, include resolution and atomic file writes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ipsim_core::frontend::preprocess::{include_candidates, normalize_path};
use ipsim_core::frontend::{IncludeResolver, SourceUnit};

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place. Readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads one or more Verilog files into a unit. Paths are kept as given so
/// diagnostics name them the way the user typed them.
pub fn load_unit(paths: &[PathBuf], top: &str) -> io::Result<SourceUnit> {
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        files.push((p.to_string_lossy().into_owned(), fs::read_to_string(p)?));
    }
    Ok(SourceUnit { files, top_module: top.to_owned(), defines: Default::default() })
}

/// Resolves includes from the unit first, then from disk relative to the
/// including file and to each search directory.
pub struct FsResolver<'a> {
    unit: &'a SourceUnit,
    search: Vec<PathBuf>,
}

impl<'a> FsResolver<'a> {
    pub fn new(unit: &'a SourceUnit, search: Vec<PathBuf>) -> Self {
        Self { unit, search }
    }
}

impl IncludeResolver for FsResolver<'_> {
    fn resolve(&self, including: &str, target: &str) -> Option<(String, String)> {
        let candidates = include_candidates(including, target);
        for c in &candidates {
            if let Some((p, t)) = self.unit.files.iter().find(|(p, _)| normalize_path(p) == *c) {
                return Some((p.clone(), t.clone()));
            }
        }
        let dirs = self.search.iter().map(|d| d.join(target));
        for path in candidates.iter().map(PathBuf::from).chain(dirs) {
            if let Ok(text) = fs::read_to_string(&path) {
                return Some((path.to_string_lossy().into_owned(), text));
            }
        }
        None
    }
}
