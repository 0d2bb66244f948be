//! Tool configuration file (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AnalysisContext, BackendConfig, PromptTemplates, TemplateError, DEFAULT_CONTEXT_BUDGET};
use crate::frontend::DepOptions;
use crate::taint::AssetSeed;

pub const MIN_CONTEXT_BUDGET: usize = 1000;

fn default_techniques() -> Vec<String> {
    vec!["net-level".into(), "gate-level".into()]
}

fn default_budget() -> usize {
    DEFAULT_CONTEXT_BUDGET
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_techniques")]
    pub techniques: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub context_budget_chars: usize,
    #[serde(default)]
    pub include_clocks: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Seeds used when none are given on the command line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assets: Vec<AssetSeed>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            backend: BackendConfig::default(),
            techniques: default_techniques(),
            prompt_dir: None,
            context_budget_chars: default_budget(),
            include_clocks: false,
            workers: default_workers(),
            assets: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl ToolConfig {
    /// Parses `path`; relative directories are taken relative to the file.
    pub fn load(path: &Path) -> Result<ToolConfig, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: ToolConfig = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.prompt_dir.take() {
            cfg.prompt_dir = Some(base.join(d));
        }
        if let Some(d) = cfg.backend.fixtures_dir.take() {
            cfg.backend.fixtures_dir = Some(base.join(d));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.context_budget_chars < MIN_CONTEXT_BUDGET {
            return bad(format!(
                "context_budget_chars must be at least {MIN_CONTEXT_BUDGET}, got {}",
                self.context_budget_chars
            ));
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if let Some(d) = &self.prompt_dir {
            if !d.is_dir() {
                return bad(format!("prompt_dir {} is not a directory", d.display()));
            }
        }
        if let Some(d) = &self.backend.fixtures_dir {
            if self.backend.kind == crate::engine::BackendKind::Replay && !d.is_dir() {
                return bad(format!("fixtures_dir {} is not a directory", d.display()));
            }
        }
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let templates = PromptTemplates::default();
        for t in &self.techniques {
            templates.technique(t)?;
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        Ok(match &self.prompt_dir {
            Some(d) => PromptTemplates::load(d)?,
            None => PromptTemplates::default(),
        })
    }

    pub fn context(&self, templates: &PromptTemplates) -> Result<AnalysisContext, ConfigError> {
        let techniques = self
            .techniques
            .iter()
            .map(|t| templates.technique(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AnalysisContext::new(techniques, self.context_budget_chars))
    }

    pub fn deps(&self) -> DepOptions {
        DepOptions {
            include_clocks: self.include_clocks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
