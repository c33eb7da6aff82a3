use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cars_core::concept::ConceptVocabulary;
use cars_core::editor::{EditorBackend, MockEditor, RemoteEditor, DEFAULT_MAX_IN_FLIGHT};
use cars_core::perturb::{PerturbationPlan, PerturbationType, MAX_PER_TYPE};
use serde::{Deserialize, Serialize};

pub const MOCK_BACKEND: &str = "mock";

/// Every setting that influences outputs. Loaded from an optional TOML
/// file, then overridden by command-line flags, and echoed into each run
/// manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub vocabulary: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub split_fractions: Vec<f64>,
    pub undersample_factor: f64,
    pub perturbation_types: Vec<PerturbationType>,
    pub max_per_type: usize,
    pub backend: String,
    pub max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            vocabulary: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
            split_fractions: vec![0.8, 0.1, 0.1],
            undersample_factor: 2.0,
            perturbation_types: vec![
                PerturbationType::IntraClass,
                PerturbationType::Insertion,
                PerturbationType::Deletion,
            ],
            max_per_type: MAX_PER_TYPE,
            backend: MOCK_BACKEND.into(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.split_fractions.iter().sum();
        if !matches!(self.split_fractions.len(), 2 | 3)
            || self
                .split_fractions
                .iter()
                .any(|f| !f.is_finite() || *f <= 0.0)
            || (total - 1.0).abs() > 1e-9
        {
            bail!(
                "split_fractions must be 2 or 3 positive numbers summing to 1, got {:?}",
                self.split_fractions
            );
        }
        if !(self.undersample_factor.is_finite() && self.undersample_factor > 0.0) {
            bail!(
                "undersample_factor must be positive, got {}",
                self.undersample_factor
            );
        }
        if !(1..=MAX_PER_TYPE).contains(&self.max_per_type) {
            bail!("max_per_type must be between 1 and {MAX_PER_TYPE}");
        }
        if self.perturbation_types.is_empty() {
            bail!("perturbation_types must not be empty");
        }
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be at least 1");
        }
        if self.backend != MOCK_BACKEND
            && !(self.backend.starts_with("http://") || self.backend.starts_with("https://"))
        {
            bail!(
                "backend must be `mock` or an http(s) URL, got `{}`",
                self.backend
            );
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<ConceptVocabulary> {
        match &self.vocabulary {
            Some(path) => ConceptVocabulary::load(path)
                .with_context(|| format!("loading vocabulary {}", path.display())),
            None => Ok(ConceptVocabulary::bundled()),
        }
    }

    pub fn plan(&self) -> Result<PerturbationPlan> {
        Ok(PerturbationPlan::new(
            self.perturbation_types.iter().copied(),
            self.max_per_type,
            self.seed,
        )?)
    }

    pub fn backend(&self, vocab: &ConceptVocabulary) -> Result<Box<dyn EditorBackend>> {
        if self.backend == MOCK_BACKEND {
            Ok(Box::new(MockEditor::new(vocab.clone())))
        } else {
            Ok(Box::new(RemoteEditor::new(&self.backend)?))
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}
