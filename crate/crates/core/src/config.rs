//! Pipeline configuration file.
//!
//! The file is TOML with `[inputs]`, `[cluster]`, `[sampling]`, `[forest]`,
//! `[simulation]` and `[run]` tables. Relative paths resolve against the
//! directory holding the config file. Any key can be overridden with a
//! `section.key=value` string, where `value` uses TOML syntax and falls back
//! to a bare string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ca::SimulationConfig;
use crate::error::{Error, Result};
use crate::forest::{ContributionMode, ForestParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReclassScheme {
    /// Rasters already hold 1 = urban, 2 = non-urban, 3 = limited.
    Identity,
    /// Rasters hold the eleven source categories.
    ElevenClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    pub epoch_t0: PathBuf,
    pub epoch_t1: PathBuf,
    #[serde(default = "default_reclass")]
    pub reclass: ReclassScheme,
    pub variables: Vec<PathBuf>,
    /// Defaults to the variable file stems.
    #[serde(default)]
    pub variable_names: Option<Vec<String>>,
    pub unit_raster: PathBuf,
    pub index_table: PathBuf,
    pub adjacency: PathBuf,
    /// Nonzero marks farmland. Derived from the t0 source codes when absent
    /// and `reclass = "eleven-class"`.
    #[serde(default)]
    pub farmland_flag: Option<PathBuf>,
}

fn default_reclass() -> ReclassScheme {
    ReclassScheme::Identity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_total: usize,
    pub phi: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_total: 5000,
            phi: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub trees: usize,
    pub sample_fraction: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_node: Option<usize>,
    /// `reevaluate` or `retrain`.
    pub contribution_mode: String,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestConfig {
            trees: p.m_trees,
            sample_fraction: p.sample_fraction,
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            features_per_node: None,
            contribution_mode: "reevaluate".into(),
        }
    }
}

impl ForestConfig {
    pub fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            m_trees: self.trees,
            sample_fraction: self.sample_fraction,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            features_per_node: self.features_per_node,
            seed,
        }
    }

    pub fn mode(&self) -> Result<ContributionMode> {
        match self.contribution_mode.as_str() {
            "reevaluate" => Ok(ContributionMode::Reevaluate),
            "retrain" => Ok(ContributionMode::Retrain),
            other => Err(Error::Config(format!(
                "forest.contribution_mode must be `reevaluate` or `retrain`, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub p_threshold: f64,
    pub alpha: f64,
    pub window: usize,
    pub max_iterations: usize,
    pub min_expansion_rate: f64,
    pub min_new_cells: usize,
    pub allow_limited_conversion: bool,
    /// Number of projected epochs beyond t1.
    pub horizon: usize,
    pub repetitions: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let c = SimulationConfig::<f64>::default();
        SimulationSection {
            p_threshold: c.p_threshold,
            alpha: c.alpha,
            window: c.window,
            max_iterations: c.max_iterations,
            min_expansion_rate: 0.0,
            min_new_cells: 0,
            allow_limited_conversion: false,
            horizon: 2,
            repetitions: 10,
        }
    }
}

impl SimulationSection {
    pub fn config(&self, demand_cells: usize, seed: u64) -> SimulationConfig<f64> {
        SimulationConfig {
            p_threshold: self.p_threshold,
            alpha: self.alpha,
            window: self.window,
            max_iterations: self.max_iterations,
            min_expansion_rate: self.min_expansion_rate,
            min_new_cells_per_step: self.min_new_cells,
            demand_cells,
            seed,
            allow_limited_conversion: self.allow_limited_conversion,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub render: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            workers: 1,
            output_dir: PathBuf::from("output"),
            render: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputsConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub run: RunConfig,
}

/// Apply `section.key=value` to a parsed TOML document.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not `section.key=value`")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key `{key}` is not `section.key`")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let table = doc
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match table {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a table"))),
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file and resolve its relative paths.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        fix(&mut i.epoch_t0);
        fix(&mut i.epoch_t1);
        i.variables.iter_mut().for_each(fix);
        fix(&mut i.unit_raster);
        fix(&mut i.index_table);
        fix(&mut i.adjacency);
        if let Some(p) = i.farmland_flag.as_mut() {
            fix(p);
        }
        fix(&mut self.run.output_dir);
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn variable_names(&self) -> Vec<String> {
        match &self.inputs.variable_names {
            Some(n) => n.clone(),
            None => self
                .inputs
                .variables
                .iter()
                .map(|p| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
        }
    }

    /// Range checks that do not need the input files.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.variables.is_empty() {
            return Err(Error::Config("inputs.variables is empty".into()));
        }
        if let Some(n) = &self.inputs.variable_names {
            if n.len() != self.inputs.variables.len() {
                return Err(Error::Config(format!(
                    "{} variable names for {} variables",
                    n.len(),
                    self.inputs.variables.len()
                )));
            }
        }
        if self.cluster.k == 0 {
            return Err(Error::Config("cluster.k must be at least 1".into()));
        }
        if self.sampling.n_total == 0 {
            return Err(Error::Config("sampling.n_total must be positive".into()));
        }
        crate::sample::SamplingPolicy {
            n_total: self.sampling.n_total,
            phi: self.sampling.phi,
            seed: 0,
        }
        .validate()?;
        self.forest.params(0).validate()?;
        self.forest.mode()?;
        self.simulation.config(0, 0).validate()?;
        if self.simulation.repetitions == 0 {
            return Err(Error::Config(
                "simulation.repetitions must be at least 1".into(),
            ));
        }
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[inputs]
epoch_t0 = "t0.asc"
epoch_t1 = "t1.asc"
variables = ["roads.asc", "slope.asc"]
unit_raster = "units.asc"
index_table = "idx.csv"
adjacency = "adj.csv"
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = PipelineConfig::from_toml_str(MINIMAL, &[]).unwrap();
        assert_eq!(c.forest.trees, 80);
        assert_eq!(c.forest.sample_fraction, 0.6);
        assert_eq!(c.simulation.repetitions, 10);
        assert_eq!(c.variable_names(), vec!["roads", "slope"]);
    }

    #[test]
    fn overrides_take_precedence() {
        let c = PipelineConfig::from_toml_str(
            MINIMAL,
            &[
                "forest.trees=12".into(),
                "run.output_dir=out/x".into(),
                "simulation.alpha = 0.5".into(),
                "inputs.reclass=\"eleven-class\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.forest.trees, 12);
        assert_eq!(c.run.output_dir, PathBuf::from("out/x"));
        assert_eq!(c.simulation.alpha, 0.5);
        assert_eq!(c.inputs.reclass, ReclassScheme::ElevenClass);
    }

    #[test]
    fn bad_values_are_rejected() {
        for o in [
            "sampling.phi=0.05",
            "forest.trees=0",
            "simulation.window=4",
            "forest.bogus=1",
            "nodot=3",
        ] {
            assert!(
                PipelineConfig::from_toml_str(MINIMAL, &[o.into()]).is_err(),
                "{o}"
            );
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig::from_toml_str(MINIMAL, &[]).unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text, &[]).unwrap(), c);
    }
}
