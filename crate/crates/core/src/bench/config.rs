//! Experiment files.
//!
//! ```toml
//! version = 1
//!
//! [dataset]
//! intercept = true            # default: true for logistic models, false otherwise
//! [dataset.source]
//! kind = "generator"          # or "csv" with path / features / target / outlier_threshold
//! name = "logistic_2d"
//! n = 5000
//! seed = 7
//!
//! [model]
//! family = "logistic"
//!
//! [[optimizers]]
//! kind = "gd"
//! [optimizers.config]
//! gamma = 0.1
//!
//! [[optimizers]]
//! kind = "cagd"
//! [optimizers.config]
//! gamma = 0.1
//!
//! [output]
//! dir = "results/logistic"
//!
//! [sweep]                     # only read by `sweep`
//! gammas = [0.01, 0.1]
//! ns = [5000, 50000]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bcd::{BcdConfig, PlanSource};
use crate::baselines::SgdConfig;
use crate::data::{self, PipelineSpec};
use crate::error::{Error, Result};
use crate::model::{Dataset, Family, ModelSpec};
use crate::optim::{CaGdConfig, OracleKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub optimizers: Vec<OptimizerSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    #[serde(default)]
    pub pipeline: Option<PipelineSpec>,
    #[serde(default)]
    pub intercept: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generator {
        name: String,
        n: usize,
        #[serde(default)]
        d: usize,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        features: Vec<String>,
        target: String,
        #[serde(default)]
        outlier_threshold: Option<f64>,
    },
}

fn neg_gradient() -> OracleKind {
    OracleKind::NegGradient
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Gd {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "neg_gradient")]
        oracle: OracleKind,
        #[serde(default)]
        config: CaGdConfig,
    },
    Cagd {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "neg_gradient")]
        oracle: OracleKind,
        #[serde(default)]
        config: CaGdConfig,
    },
    Bcd {
        #[serde(default)]
        label: Option<String>,
        plan: PlanSource,
        #[serde(default)]
        config: BcdConfig,
    },
    Cabcd {
        #[serde(default)]
        label: Option<String>,
        plan: PlanSource,
        #[serde(default)]
        config: BcdConfig,
    },
    Sag {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        config: SgdConfig,
    },
    Adam {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        config: SgdConfig,
    },
}

impl OptimizerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OptimizerSpec::Gd { .. } => "gd",
            OptimizerSpec::Cagd { .. } => "cagd",
            OptimizerSpec::Bcd { .. } => "bcd",
            OptimizerSpec::Cabcd { .. } => "cabcd",
            OptimizerSpec::Sag { .. } => "sag",
            OptimizerSpec::Adam { .. } => "adam",
        }
    }

    /// Label used for file names; the kind when none is given.
    pub fn label(&self) -> String {
        let l = match self {
            OptimizerSpec::Gd { label, .. }
            | OptimizerSpec::Cagd { label, .. }
            | OptimizerSpec::Bcd { label, .. }
            | OptimizerSpec::Cabcd { label, .. }
            | OptimizerSpec::Sag { label, .. }
            | OptimizerSpec::Adam { label, .. } => label,
        };
        l.clone().unwrap_or_else(|| self.kind().to_string())
    }

    /// Sets the step size of full-gradient and block methods.
    /// Stochastic baselines keep their learning rate.
    pub fn set_gamma(&mut self, gamma: f64) {
        match self {
            OptimizerSpec::Gd { config, .. } | OptimizerSpec::Cagd { config, .. } => config.gamma = gamma,
            OptimizerSpec::Bcd { config, .. } | OptimizerSpec::Cabcd { config, .. } => config.gamma = gamma,
            OptimizerSpec::Sag { .. } | OptimizerSpec::Adam { .. } => {}
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            OptimizerSpec::Bcd { config, .. } | OptimizerSpec::Cabcd { config, .. } => config.seed = seed,
            OptimizerSpec::Sag { config, .. } | OptimizerSpec::Adam { config, .. } => config.seed = seed,
            OptimizerSpec::Gd { .. } | OptimizerSpec::Cagd { .. } => {}
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            OptimizerSpec::Gd { config, oracle, .. } | OptimizerSpec::Cagd { config, oracle, .. } => {
                crate::optim::DirectionOracle::new(*oracle)?;
                config.validate()
            }
            OptimizerSpec::Bcd { config, .. } | OptimizerSpec::Cabcd { config, .. } => config.validate(),
            OptimizerSpec::Sag { config, .. } | OptimizerSpec::Adam { config, .. } => config.validate(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub gammas: Vec<f64>,
    pub ns: Vec<usize>,
}

fn field_err(path: &str, e: Error) -> Error {
    let msg = match e {
        Error::InvalidConfig(m) => m,
        other => other.to_string(),
    };
    Error::InvalidConfig(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative CSV paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let DataSource::Csv { path: csv, .. } = &mut cfg.dataset.source {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    /// Structural checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "version: expected {SCHEMA_VERSION}, found {}",
                self.version
            )));
        }
        if self.optimizers.is_empty() {
            return Err(Error::InvalidConfig("optimizers: at least one optimizer is required".into()));
        }
        self.model.validate().map_err(|e| field_err("model", e))?;
        if let DataSource::Generator { name, n, .. } = &self.dataset.source {
            if !data::GENERATORS.contains(&name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "dataset.source.name: unknown generator {name:?}, expected one of {:?}",
                    data::GENERATORS
                )));
            }
            if *n == 0 {
                return Err(Error::InvalidConfig("dataset.source.n: must be positive".into()));
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, o) in self.optimizers.iter().enumerate() {
            if !labels.insert(o.label()) {
                return Err(Error::InvalidConfig(format!(
                    "optimizers[{i}].label: duplicate label {:?}",
                    o.label()
                )));
            }
            // batch sizes are checked against N once the data exist
            o.validate(usize::MAX).map_err(|e| field_err(&format!("optimizers[{i}]"), e))?;
        }
        if let Some(s) = &self.sweep {
            if s.gammas.is_empty() || s.ns.is_empty() {
                return Err(Error::InvalidConfig("sweep: gammas and ns must be nonempty".into()));
            }
            if s.ns.contains(&0) {
                return Err(Error::InvalidConfig("sweep.ns: sizes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Replaces every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        if let DataSource::Generator { seed: s, .. } = &mut self.dataset.source {
            *s = seed;
        }
        for o in &mut self.optimizers {
            o.set_seed(seed);
        }
    }

    pub fn intercept(&self) -> bool {
        self.dataset
            .intercept
            .unwrap_or(self.model.family == Family::Logistic)
    }

    /// Builds the dataset described by the file.
    pub fn build_dataset(&self) -> Result<Dataset> {
        let raw = match &self.dataset.source {
            DataSource::Generator { name, n, d, seed } => data::generate(name, *n, *d, *seed)?,
            DataSource::Csv { path, features, target, outlier_threshold } => {
                let cols: Vec<&str> = features.iter().map(String::as_str).collect();
                data::load_csv(path, &cols, target, *outlier_threshold)?.dataset
            }
        };
        let piped = match &self.dataset.pipeline {
            None => raw,
            Some(p) => Dataset::new(data::apply_pipeline(raw.x(), p)?.x, raw.y().clone())?,
        };
        let out = if self.intercept() { piped.with_intercept() } else { piped };
        for (i, o) in self.optimizers.iter().enumerate() {
            o.validate(out.n_samples()).map_err(|e| field_err(&format!("optimizers[{i}]"), e))?;
        }
        Ok(out)
    }

    /// Copy of this config at one sweep grid point.
    pub fn at_grid_point(&self, gamma: f64, n: usize) -> Result<Self> {
        let mut c = self.clone();
        match &mut c.dataset.source {
            DataSource::Generator { n: size, .. } => *size = n,
            DataSource::Csv { .. } => {
                return Err(Error::InvalidConfig("sweep: needs a generator data source".into()))
            }
        }
        for o in &mut c.optimizers {
            o.set_gamma(gamma);
        }
        c.sweep = None;
        Ok(c)
    }
}
