// SPDX-License-Identifier: Apache-2.0

//! Corpus directories, manifests, pair files and the in-memory dataset of
//! encoded designs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ipsim_core::corpus::{
    make_pairs, synthesize_variants, Abstraction, CorpusError, Design, DesignFamily, PairRecord, Split, Transform,
};
use ipsim_core::detect::{design_graph, PipelineError};
use ipsim_core::encode::{encode, GraphTensors, Vocabulary};
use ipsim_core::frontend::{SourceUnit, UnitResolver};
use ipsim_core::train::PairRef;
use rayon::prelude::*;

use crate::fsio::{load_unit, write_atomic, FsResolver};

/// Name of the manifest picked up from a corpus root when none is given.
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("corpus at {0} contains no usable designs")]
    Empty(PathBuf),
    #[error("{path}: {message}")]
    Pairs { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScanError + '_ {
    move |source| ScanError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub families: Vec<DesignFamily>,
    pub skipped: Vec<Skipped>,
}

/// Reads manifest lines `family_id, path, rtl|netlist`. Paths are relative
/// to the manifest's directory; `#` starts a comment.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, Design)>, ScanError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| ScanError::Manifest { path: path.to_owned(), line: i + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [family, file, kind] = fields[..] else {
            return Err(bad(format!("expected `family_id, path, rtl|netlist`, found {} fields", fields.len())));
        };
        if family.is_empty() || file.is_empty() {
            return Err(bad("empty family id or path".into()));
        }
        let abstraction = Abstraction::parse(kind).ok_or_else(|| bad(format!("unknown abstraction `{kind}`")))?;
        let p = base.join(file);
        out.push((family.to_owned(), Design { path: p.to_string_lossy().into_owned(), abstraction }));
    }
    Ok(out)
}

fn directory_layout(root: &Path, abstraction: Abstraction) -> Result<Vec<(String, Design)>, ScanError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let dir = entry.map_err(io_err(root))?.path();
        if !dir.is_dir() {
            continue;
        }
        let family = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for file in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = file.map_err(io_err(&dir))?.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "v") {
                out.push((family.clone(), Design { path: p.to_string_lossy().into_owned(), abstraction }));
            }
        }
    }
    Ok(out)
}

/// Groups a corpus into families. The manifest, when given or present as
/// `root/manifest.txt`, replaces the directory grouping. Files that fail to
/// reach a dataflow graph are reported and left out.
pub fn scan(root: &Path, manifest: Option<&Path>, abstraction: Abstraction) -> Result<ScanReport, ScanError> {
    let default_manifest = root.join(MANIFEST_NAME);
    let manifest = manifest.map(Path::to_path_buf).or_else(|| default_manifest.is_file().then_some(default_manifest));
    let entries = match &manifest {
        Some(m) => read_manifest(m)?,
        None => directory_layout(root, abstraction)?,
    };
    let checked: Vec<Option<String>> =
        entries.par_iter().map(|(_, d)| check_design(Path::new(&d.path)).err()).collect();
    let mut grouped: BTreeMap<String, Vec<Design>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for ((family, design), err) in entries.into_iter().zip(checked) {
        match err {
            Some(reason) => skipped.push(Skipped { path: design.path, reason }),
            None => grouped.entry(family).or_default().push(design),
        }
    }
    let families: Vec<DesignFamily> = grouped
        .into_iter()
        .map(|(id, mut members)| {
            members.sort();
            members.dedup();
            DesignFamily { id, members }
        })
        .collect();
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    if families.is_empty() {
        return Err(ScanError::Empty(root.to_owned()));
    }
    Ok(ScanReport { families, skipped })
}

fn check_design(path: &Path) -> Result<(), String> {
    let unit = load_unit(&[path.to_owned()], "").map_err(|e| e.to_string())?;
    design_graph(&unit, &FsResolver::new(&unit, vec![])).map(|_| ()).map_err(|e| e.to_string())
}

/// Pairs within each abstraction separately unless `mix` is set, in which
/// case designs of the same family pair across abstractions as well.
pub fn corpus_pairs(families: &[DesignFamily], mix: bool) -> Result<Vec<PairRecord>, CorpusError> {
    if mix {
        return make_pairs(families);
    }
    let mut out = Vec::new();
    let mut groups = 0;
    for kind in [Abstraction::Rtl, Abstraction::Netlist] {
        let part: Vec<DesignFamily> = families
            .iter()
            .map(|f| DesignFamily {
                id: f.id.clone(),
                members: f.members.iter().filter(|m| m.abstraction == kind).cloned().collect(),
            })
            .filter(|f| !f.members.is_empty())
            .collect();
        if part.len() >= 2 {
            out.extend(make_pairs(&part)?);
            groups += 1;
        }
    }
    if groups == 0 {
        return Err(CorpusError::TooFewFamilies(families.len().min(1)));
    }
    Ok(out)
}

pub fn write_pairs(pairs: &[PairRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a_path", "b_path", "label", "split"]).expect("in-memory write");
    for p in pairs {
        w.write_record([p.a.as_str(), p.b.as_str(), &p.label.to_string(), p.split.as_str()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>, ScanError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_pairs(&text).map_err(|message| ScanError::Pairs { path: path.to_owned(), message })
}

pub fn parse_pairs(text: &str) -> Result<Vec<PairRecord>, String> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["a_path", "b_path", "label", "split"] {
        return Err("header must be a_path,b_path,label,split".into());
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = i + 2;
        let label: i8 = rec[2].parse().map_err(|_| format!("row {row}: bad label `{}`", &rec[2]))?;
        if label != 1 && label != -1 {
            return Err(format!("row {row}: label must be 1 or -1"));
        }
        let split = Split::parse(&rec[3]).ok_or_else(|| format!("row {row}: split must be train or test"))?;
        if rec[0] == rec[1] {
            return Err(format!("row {row}: a pair needs two distinct designs"));
        }
        out.push(PairRecord { a: rec[0].to_owned(), b: rec[1].to_owned(), label, split });
    }
    Ok(out)
}

/// Encoded designs addressed by name. Synthesized variants are named
/// `<original>#v<k>`.
pub struct Dataset {
    pub names: Vec<String>,
    pub families: Vec<DesignFamily>,
    pub graphs: Vec<GraphTensors>,
    /// Source text of each synthesized variant, by name.
    pub variant_sources: BTreeMap<String, String>,
    index: BTreeMap<String, usize>,
}

/// Seed of the `k`-th design's variants.
fn variant_seed(seed: u64, k: usize) -> u64 {
    ipsim_core::train::mask_seed(seed, k, usize::MAX - 1, 0)
}

impl Dataset {
    /// Encodes every family member and adds `variants` synthesized variants
    /// per member to its family.
    pub fn build(families: &[DesignFamily], variants: usize, seed: u64) -> Result<Self, PipelineError> {
        let members: Vec<(usize, &Design)> =
            families.iter().enumerate().flat_map(|(f, fam)| fam.members.iter().map(move |m| (f, m))).collect();
        type Loaded = Vec<(String, GraphTensors, Option<String>)>;
        let loaded: Vec<Result<Loaded, PipelineError>> = members
            .par_iter()
            .enumerate()
            .map(|(k, (_, d))| {
                let unit = load_unit(&[PathBuf::from(&d.path)], "").map_err(|e| PipelineError::io(&d.path, e))?;
                let mut out = vec![(d.path.clone(), tensors(&unit, &d.path, true)?, None)];
                if variants > 0 {
                    let texts = synthesize_variants(
                        &unit,
                        &FsResolver::new(&unit, vec![]),
                        &Transform::ALL,
                        variants,
                        variant_seed(seed, k),
                    )
                    .map_err(|e| PipelineError::frontend(&d.path, e))?;
                    for (j, text) in texts.into_iter().enumerate() {
                        let name = format!("{}#v{}", d.path, j + 1);
                        let unit = SourceUnit::single(&name, &text, "");
                        out.push((name.clone(), tensors(&unit, &name, false)?, Some(text)));
                    }
                }
                Ok(out)
            })
            .collect();
        let mut ds = Dataset {
            names: Vec::new(),
            families: families.iter().map(|f| DesignFamily { id: f.id.clone(), members: Vec::new() }).collect(),
            graphs: Vec::new(),
            variant_sources: BTreeMap::new(),
            index: BTreeMap::new(),
        };
        for ((f, d), res) in members.iter().zip(loaded) {
            for (name, g, text) in res? {
                if let Some(text) = text {
                    ds.variant_sources.insert(name.clone(), text);
                }
                ds.index.insert(name.clone(), ds.names.len());
                ds.families[*f].members.push(Design { path: name.clone(), abstraction: d.abstraction });
                ds.names.push(name);
                ds.graphs.push(g);
            }
        }
        Ok(ds)
    }

    /// Encodes exactly the designs named by `pairs`, read from disk.
    pub fn from_pairs(pairs: &[PairRecord]) -> Result<Self, PipelineError> {
        let mut names: Vec<String> = pairs.iter().flat_map(|p| [p.a.clone(), p.b.clone()]).collect();
        names.sort();
        names.dedup();
        let graphs = names
            .par_iter()
            .map(|n| {
                let unit = load_unit(&[PathBuf::from(n)], "").map_err(|e| PipelineError::io(n, e))?;
                tensors(&unit, n, true)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Dataset { names, families: Vec::new(), graphs, variant_sources: BTreeMap::new(), index })
    }

    /// Writes every synthesized variant to `dir/<family>/<stem>_v<k>.v` and
    /// returns `pairs` with variant names replaced by those paths.
    pub fn materialize_variants(&self, pairs: &[PairRecord], dir: &Path) -> Result<Vec<PairRecord>, ScanError> {
        let mut paths: BTreeMap<&str, String> = BTreeMap::new();
        let mut taken = std::collections::BTreeSet::new();
        for fam in &self.families {
            for m in &fam.members {
                let Some(text) = self.variant_sources.get(&m.path) else { continue };
                let (orig, k) = m.path.rsplit_once("#v").unwrap_or((&m.path, "0"));
                let stem = Path::new(orig).file_stem().and_then(|s| s.to_str()).unwrap_or("design");
                let mut file = dir.join(&fam.id).join(format!("{stem}_v{k}.v"));
                let mut n = 1;
                while !taken.insert(file.clone()) {
                    n += 1;
                    file = dir.join(&fam.id).join(format!("{stem}_{n}_v{k}.v"));
                }
                let parent = dir.join(&fam.id);
                fs::create_dir_all(&parent).map_err(io_err(&parent))?;
                write_atomic(&file, text.as_bytes()).map_err(io_err(&file))?;
                paths.insert(&m.path, file.display().to_string());
            }
        }
        let rename = |n: &String| paths.get(n.as_str()).cloned().unwrap_or_else(|| n.clone());
        Ok(pairs.iter().map(|p| PairRecord { a: rename(&p.a), b: rename(&p.b), ..p.clone() }).collect())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Pair references split into (train, test).
    pub fn refs(&self, pairs: &[PairRecord]) -> Result<(Vec<PairRef>, Vec<PairRef>), String> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for p in pairs {
            let a = self.index_of(&p.a).ok_or_else(|| format!("unknown design {}", p.a))?;
            let b = self.index_of(&p.b).ok_or_else(|| format!("unknown design {}", p.b))?;
            let r = PairRef { a, b, y: p.label };
            match p.split {
                Split::Train => train.push(r),
                Split::Test => test.push(r),
            }
        }
        Ok((train, test))
    }
}

fn tensors(unit: &SourceUnit, name: &str, on_disk: bool) -> Result<GraphTensors, PipelineError> {
    let g = if on_disk {
        design_graph(unit, &FsResolver::new(unit, vec![]))?
    } else {
        design_graph(unit, &UnitResolver::new(unit))?
    };
    encode(&g, &Vocabulary::default()).map_err(|e| PipelineError::encode(name, e))
}
