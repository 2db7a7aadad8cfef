use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Algorithm, ClassifierParams};
use crate::error::{Error, Result};
use crate::metrics::{BhattacharyyaForm, NotAvailable};
use crate::preprocess::{BandRoles, NdwiConvention};
use crate::sampling::ClassScheme;
use crate::snic::SnicParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputImage {
    pub path: PathBuf,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.7, seed: 42 }
    }
}

/// Point files that are already split into training and validation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresplitPoints {
    pub train: PathBuf,
    pub validation: PathBuf,
}

/// One JSON document driving every stage. Relative paths are resolved
/// against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<InputImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_window: Option<DateWindow>,
    #[serde(default)]
    pub band_roles: BandRoles,
    #[serde(default)]
    pub ndwi_convention: NdwiConvention,
    #[serde(default)]
    pub snic: SnicParams,
    pub classifier: Algorithm,
    #[serde(default)]
    pub classifier_params: ClassifierParams,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presplit: Option<PresplitPoints>,
    pub classes: ClassScheme,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bhattacharyya_form: BhattacharyyaForm,
    #[serde(default)]
    pub not_available: NotAvailable,
    /// RGB per class id for rendered maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette: Option<Vec<[u8; 3]>>,
}

/// Command-line replacements for individual config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub output_dir: Option<PathBuf>,
    pub classifier: Option<Algorithm>,
    pub split_seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub ndwi_convention: Option<NdwiConvention>,
    pub seed_spacing: Option<usize>,
    pub compactness: Option<f64>,
    pub bhattacharyya_form: Option<BhattacharyyaForm>,
    pub not_available: Option<NotAvailable>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    /// Parse `path` and resolve relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for i in &mut self.inputs {
            resolve(base, &mut i.path);
        }
        if let Some(b) = &mut self.bounds {
            resolve(base, b);
        }
        if let Some(p) = &mut self.points {
            resolve(base, p);
        }
        if let Some(s) = &mut self.presplit {
            resolve(base, &mut s.train);
            resolve(base, &mut s.validation);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.classifier {
            self.classifier = v;
        }
        if let Some(v) = o.split_seed {
            self.split.seed = v;
        }
        if let Some(v) = o.train_fraction {
            self.split.train_fraction = v;
        }
        if let Some(v) = o.ndwi_convention {
            self.ndwi_convention = v;
        }
        if let Some(v) = o.seed_spacing {
            self.snic.seed_spacing = v;
        }
        if let Some(v) = o.compactness {
            self.snic.compactness = v;
        }
        if let Some(v) = o.bhattacharyya_form {
            self.bhattacharyya_form = v;
        }
        if let Some(v) = o.not_available {
            self.not_available = v;
        }
    }

    /// Parameter checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.inputs.is_empty() {
            return cfg("inputs must list at least one image".into());
        }
        if let Some(w) = self.date_window {
            if w.start > w.end {
                return cfg(format!("date_window start {} is after end {}", w.start, w.end));
            }
        }
        if self.classes.is_empty() {
            return cfg("classes must name at least one class".into());
        }
        if self.points.is_none() && self.presplit.is_none() {
            return cfg("either points or presplit must be given".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return cfg(format!("split.train_fraction must lie in (0, 1), got {}", self.split.train_fraction));
        }
        self.snic.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.classifier_params.cart.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = &self.palette {
            if p.len() < self.classes.len() {
                return cfg(format!("palette has {} colors for {} classes", p.len(), self.classes.len()));
            }
        }
        Ok(())
    }

    /// Fail with a config error when a referenced input file is missing.
    pub fn check_paths(&self) -> Result<()> {
        let mut paths: Vec<&Path> = self.inputs.iter().map(|i| i.path.as_path()).collect();
        paths.extend(self.bounds.as_deref());
        paths.extend(self.points.as_deref());
        if let Some(s) = &self.presplit {
            paths.push(&s.train);
            paths.push(&s.validation);
        }
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::Config(format!("referenced file {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
