//! The `report` manifest: which logs, populations and activation tensors
//! to load, and optional analysis settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biascope_core::analysis::{EllipseMode, LayerSpec, ReportConfig};
use biascope_core::svcca::SvccaOptions;
use serde::{Deserialize, Serialize};

use crate::args::ReportArgs;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub baseline: BaselineEntry,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub config: ManifestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEntry {
    pub log: PathBuf,
    #[serde(default)]
    pub activations: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub log: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_population: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressed_population: Option<PathBuf>,
    #[serde(default)]
    pub activations: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_sigma: Option<bool>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("{}: invalid manifest: {e}", origin.display())))
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.models.is_empty() {
            return Err(CliError::Validation("manifest lists no models".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.layer_id.as_str()) {
                return Err(CliError::Validation(format!("layer `{}` is listed twice", layer.layer_id)));
            }
            if !self.baseline.activations.contains_key(&layer.layer_id) {
                return Err(CliError::Validation(format!(
                    "layer `{}`: no baseline activation tensor",
                    layer.layer_id
                )));
            }
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.reference_population.is_some() != m.compressed_population.is_some() {
                return Err(CliError::Validation(format!(
                    "model entry {i} ({}): reference_population and compressed_population must be given together",
                    m.log.display()
                )));
            }
        }
        Ok(())
    }

    /// Flags win over manifest values, which win over the defaults.
    pub fn report_config(&self, args: &ReportArgs) -> Result<ReportConfig<f64>, CliError> {
        let defaults = ReportConfig::<f64>::default();
        let c = &self.config;
        let two_sigma = args.two_sigma || (args.coverage.is_none() && c.two_sigma.unwrap_or(false));
        let ellipse = if two_sigma {
            EllipseMode::TwoSigma
        } else {
            match args.coverage.or(c.coverage) {
                Some(coverage) => EllipseMode::Coverage { coverage },
                None => defaults.ellipse,
            }
        };
        let config = ReportConfig {
            epsilon: args.epsilon.or(c.epsilon).unwrap_or(defaults.epsilon),
            svcca: SvccaOptions {
                variance_threshold: args
                    .threshold
                    .or(c.variance_threshold)
                    .unwrap_or(defaults.svcca.variance_threshold),
                top_k: args.top_k.or(c.top_k),
            },
            ellipse,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Resolves `path` against the manifest's directory unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
