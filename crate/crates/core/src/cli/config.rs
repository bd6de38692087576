//! Experiment configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Method, Parallelism};
use crate::error::{Error, Result};
use crate::learner::TreeSpec;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub arff: Option<PathBuf>,
    pub xml: Option<PathBuf>,
    pub name: Option<String>,
    pub method: Option<String>,
    pub methods: Option<MethodList>,
    pub seed: Option<u64>,
    pub feature_keep_fraction: Option<f64>,
    pub out: Option<PathBuf>,
    pub sequential: Option<bool>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub tree: TreeSection,
    #[serde(default)]
    pub cv: CvSection,
}

/// Either `"BR,ECC"` or `["BR", "ECC"]`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MethodList {
    Joined(String),
    List(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub c: Option<usize>,
    pub theta_max: Option<f64>,
    pub theta_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub repeats: Option<usize>,
    pub folds: Option<usize>,
}

impl FileConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.arff, &mut cfg.xml, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Fully resolved settings of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub arff: PathBuf,
    pub xml: PathBuf,
    pub name: String,
    pub methods: Vec<Method>,
    pub c: usize,
    pub theta_max: f64,
    pub theta_min: Option<f64>,
    pub tree: TreeSpec,
    pub repeats: usize,
    pub folds: usize,
    pub feature_keep_fraction: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl ExperimentConfig {
    /// Defaults: all methods, `c = 10`, `θ_max = 10`, 5 × 2-fold, seed 0.
    pub fn new(arff: impl Into<PathBuf>, xml: impl Into<PathBuf>) -> Self {
        let arff = arff.into();
        let name = arff
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self {
            arff,
            xml: xml.into(),
            name,
            methods: Method::ALL.to_vec(),
            c: 10,
            theta_max: 10.0,
            theta_min: None,
            tree: TreeSpec::default(),
            repeats: 5,
            folds: 2,
            feature_keep_fraction: None,
            seed: 0,
            out_dir: None,
            parallelism: Parallelism::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("cv.repeats must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("a method is listed twice".into()));
        }
        if self.theta_min.is_some() && !self.methods.contains(&Method::Eccru3) {
            return Err(Error::Config(
                "ensemble.theta_min is only meaningful with ECCRU3".into(),
            ));
        }
        for &m in &self.methods {
            self.spec_for(m, 0).validate()?;
        }
        if let Some(f) = self.feature_keep_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "feature_keep_fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    /// Ensemble settings for `method`; the lower clamp goes to ECCRU3 only.
    pub fn spec_for(&self, method: Method, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            method,
            c: self.c,
            theta_max: self.theta_max,
            theta_min: if method == Method::Eccru3 {
                self.theta_min
            } else {
                None
            },
            tree: self.tree,
            seed,
        }
    }
}
