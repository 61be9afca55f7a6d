//! Tab-separated dataset manifests.
//!
//! ```text
//! # image_path	c1	c2	noise_seed	gt_rotation_deg
//! img_0000.pgm	-1.5	-1.5	9182736455	-38.1
//! ```
//!
//! The header lists the active columns. Image paths are relative to the
//! manifest's directory. Entries are kept sorted by codes.

// The example above shows real tab separators.
#![allow(clippy::tabs_in_doc_comments)]

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::mock::GroundTruth;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub codes: Vec<f64>,
    pub noise_seed: u64,
    pub ground_truth: GroundTruth,
}

/// Images indexed by the codes that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    /// Directory image paths are resolved against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn compare_codes(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

const GT_COLUMNS: [&str; 3] = ["gt_rotation_deg", "gt_translation_px", "gt_scale"];

fn gt_field(gt: &GroundTruth, col: usize) -> Option<f64> {
    match col {
        0 => gt.rotation_deg,
        1 => gt.translation_px,
        _ => gt.scale,
    }
}

fn gt_field_mut(gt: &mut GroundTruth, col: usize) -> &mut Option<f64> {
    match col {
        0 => &mut gt.rotation_deg,
        1 => &mut gt.translation_px,
        _ => &mut gt.scale,
    }
}

impl CalibrationDataset {
    pub fn new(base_dir: impl Into<PathBuf>, mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| compare_codes(&a.codes, &b.codes));
        CalibrationDataset {
            base_dir: base_dir.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn code_dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.codes.len())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.image_path)
    }

    /// Checks code dimensions and ordering without touching image files.
    pub fn validate_structure(&self) -> Result<()> {
        let dim = self.code_dim();
        if !(1..=2).contains(&dim) {
            return Err(Error::Validation(format!("unsupported code dimension {dim}")));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.codes.len() != dim {
                return Err(Error::Validation(format!(
                    "{}: has {} code(s), expected {dim}",
                    e.image_path.display(),
                    e.codes.len()
                )));
            }
            if !e.codes.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("{}: non-finite code", e.image_path.display())));
            }
            if i > 0 && compare_codes(&self.entries[i - 1].codes, &e.codes).is_gt() {
                return Err(Error::Validation("entries are not sorted by codes".into()));
            }
        }
        for col in 0..3 {
            let present = self.entries.iter().filter(|e| gt_field(&e.ground_truth, col).is_some()).count();
            if present != 0 && present != self.entries.len() {
                return Err(Error::Validation(format!("{} is set on only some entries", GT_COLUMNS[col])));
            }
        }
        Ok(())
    }

    /// Full validation: structure, then every image loads at one common size.
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("dataset has no entries".into()));
        }
        self.validate_structure()?;
        let mut size = None;
        for e in &self.entries {
            let path = self.resolve(e);
            if !path.is_file() {
                return Err(Error::Validation(format!("missing image {}", path.display())));
            }
            let img = Image::load(&path)?;
            match size {
                None => size = Some(img.size()),
                Some(s) if s != img.size() => {
                    return Err(Error::Validation(format!(
                        "{}: size {} differs from {s}",
                        path.display(),
                        img.size()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> Result<String> {
        self.validate_structure()?;
        let dim = self.code_dim();
        let gts: Vec<usize> = (0..3)
            .filter(|&c| self.entries.iter().any(|e| gt_field(&e.ground_truth, c).is_some()))
            .collect();
        let mut cols = vec!["image_path", "c1"];
        if dim == 2 {
            cols.push("c2");
        }
        cols.push("noise_seed");
        cols.extend(gts.iter().map(|&c| GT_COLUMNS[c]));
        let mut out = format!("# {}\n", cols.join("\t"));
        for e in &self.entries {
            let path = e.image_path.to_str().ok_or_else(|| {
                Error::Validation(format!("{}: path is not UTF-8", e.image_path.display()))
            })?;
            if path.contains(['\t', '\n']) {
                return Err(Error::Validation(format!("{path}: tab or newline in path")));
            }
            out.push_str(path);
            for c in &e.codes {
                let _ = write!(out, "\t{c}");
            }
            let _ = write!(out, "\t{}", e.noise_seed);
            for &c in &gts {
                let _ = write!(out, "\t{}", gt_field(&e.ground_truth, c).expect("validated"));
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses manifest text; `base_dir` anchors the relative image paths.
    pub fn from_tsv(text: &str, base_dir: impl Into<PathBuf>, location: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(location, "empty manifest"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(format!("{location}:1"), "header must start with '#'"))?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        let expected_start: &[&str] = &["image_path", "c1"];
        if cols.len() < 3 || cols[..2] != *expected_start {
            return Err(Error::parse(
                format!("{location}:1"),
                "header must begin with image_path, c1",
            ));
        }
        let dim = if cols[2] == "c2" { 2 } else { 1 };
        if cols.get(dim + 1) != Some(&"noise_seed") {
            return Err(Error::parse(format!("{location}:1"), "missing noise_seed column"));
        }
        let mut gts = Vec::new();
        for name in &cols[dim + 2..] {
            let c = GT_COLUMNS
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| Error::parse(format!("{location}:1"), format!("unknown column {name:?}")))?;
            if gts.contains(&c) {
                return Err(Error::parse(format!("{location}:1"), format!("duplicate column {name:?}")));
            }
            gts.push(c);
        }

        let mut entries = Vec::new();
        for (idx, line) in lines {
            let loc = format!("{location}:{}", idx + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(Error::parse(
                    loc,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            let float = |i: usize| -> Result<f64> {
                let v: f64 = fields[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&loc, format!("{}: invalid number {:?}", cols[i], fields[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(&loc, format!("{}: not finite", cols[i])))
                }
            };
            if fields[0].is_empty() {
                return Err(Error::parse(&loc, "image_path: empty"));
            }
            let codes = (1..=dim).map(float).collect::<Result<Vec<_>>>()?;
            let noise_seed = fields[dim + 1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&loc, format!("noise_seed: invalid integer {:?}", fields[dim + 1])))?;
            let mut ground_truth = GroundTruth::default();
            for (k, &c) in gts.iter().enumerate() {
                *gt_field_mut(&mut ground_truth, c) = Some(float(dim + 2 + k)?);
            }
            entries.push(ManifestEntry {
                image_path: PathBuf::from(fields[0]),
                codes,
                noise_seed,
                ground_truth,
            });
        }
        Ok(CalibrationDataset::new(base_dir, entries))
    }

    /// Writes the manifest in canonical order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut sorted = self.clone();
        sorted.entries.sort_by(|a, b| compare_codes(&a.codes, &b.codes));
        fs::write(path, sorted.to_tsv()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a manifest. Image files are not opened; see [`Self::validate`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_tsv(&text, base, &path.display().to_string())
    }
}
