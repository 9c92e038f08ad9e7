//! Experiment orchestration: seeded trials for localization, identification
//! and the full retrieval pipeline, summary statistics, method comparison and
//! the files written for each run.

mod experiment;
mod plot;
mod stats;
mod trials;

pub use experiment::{check_invariants, records_csv, run_experiment, summary_charts, write_outputs, ExperimentOutput};
pub use plot::{bar_chart, Bar};
pub use stats::{compare_methods, summarize, Comparison, Stat, SummaryTable};
pub use trials::{identify_trial, localize_trial, reference_taps, run_pipeline_trial, TrialRecord};

use crate::datasets::{DatasetError, SceneParams, SplitManifest};
use crate::encoder::{EncoderError, EncoderModel};
use crate::interact::{GraspConfig, InteractError, TapConfig};
use crate::localize::{LocalizeConfig, LocalizeError, PfConfig};
use crate::world::{ObjectShape, WorldError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("experiment {0} needs a trained model (set `model`)")]
    MissingModel(&'static str),
    #[error("tables do not share metrics: {0}")]
    MetricMismatch(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Interact(#[from] InteractError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Localize,
    Identify,
    Pipeline,
    AblateFriction,
    AblateStatic,
    AblateInteraction,
    AblateArch,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Localize => "localize",
            ExperimentKind::Identify => "identify",
            ExperimentKind::Pipeline => "pipeline",
            ExperimentKind::AblateFriction => "ablate_friction",
            ExperimentKind::AblateStatic => "ablate_static",
            ExperimentKind::AblateInteraction => "ablate_interaction",
            ExperimentKind::AblateArch => "ablate_arch",
        }
    }

    pub fn needs_model(self) -> bool {
        self != ExperimentKind::Localize
    }
}

/// Overrides applied on top of `scene` for every generated scene.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsOverrides {
    pub friction: Option<f64>,
    pub mass: Option<f64>,
    pub static_mode: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Objects per scene for localization and the pipeline.
    pub k: usize,
    /// Candidates per identification panel.
    pub panel: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Seed of the shape manifest; trials draw from its validation shapes.
    pub shape_seed: u64,
    pub physics: PhysicsOverrides,
    pub model: Option<PathBuf>,
    /// Per-condition checkpoints for the interaction (keyed by variant) and
    /// architecture (keyed by label) ablations.
    pub models: BTreeMap<String, PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub frictions: Vec<f64>,
    /// Std (cm) of the centre estimate handed to the tapper in identification trials.
    pub center_noise: f64,
    pub svg_samples: usize,
    pub scene: SceneParams,
    pub localize: LocalizeConfig,
    pub pf: PfConfig,
    pub tap: TapConfig,
    pub grasp: GraspConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Localize,
            k: 3,
            panel: 5,
            n_trials: 200,
            seed: 0,
            shape_seed: 0,
            physics: PhysicsOverrides::default(),
            model: None,
            models: BTreeMap::new(),
            output_dir: None,
            frictions: vec![0.5, 0.25, 0.1],
            center_noise: 1.5,
            svg_samples: 3,
            scene: SceneParams::default(),
            localize: LocalizeConfig::default(),
            pf: PfConfig::default(),
            tap: TapConfig::default(),
            grasp: GraspConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_kind(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            ..Self::default()
        }
    }

    /// Scene parameters with the physics overrides applied.
    pub fn scene_params(&self) -> SceneParams {
        let mut p = self.scene;
        if let Some(mu) = self.physics.friction {
            p.friction = mu;
        }
        if let Some(m) = self.physics.mass {
            p.mass = m;
        }
        if let Some(s) = self.physics.static_mode {
            p.static_mode = s;
        }
        p
    }

    /// Checks counts and that every referenced model file exists.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.k == 0 || self.panel == 0 {
            return bad("k and panel must be positive".into());
        }
        if self.experiment == ExperimentKind::AblateFriction && self.frictions.is_empty() {
            return bad("friction sweep needs at least one value".into());
        }
        if self.experiment.needs_model() && self.model.is_none() && self.models.is_empty() {
            return Err(HarnessError::MissingModel(self.experiment.name()));
        }
        if self.experiment == ExperimentKind::AblateArch && self.models.is_empty() {
            return bad("ablate_arch compares the checkpoints listed in `models`".into());
        }
        for p in self.model.iter().chain(self.models.values()) {
            if !p.is_file() {
                return bad(format!("model file {} not found", p.display()));
            }
        }
        let n = self.experiment_pool_size();
        let need = if matches!(self.experiment, ExperimentKind::Localize | ExperimentKind::Pipeline) { self.k } else { self.panel.max(self.k) };
        if need > n {
            return bad(format!("{need} objects per scene but only {n} held-out shapes"));
        }
        Ok(())
    }

    fn experiment_pool_size(&self) -> usize {
        SplitManifest::standard(self.shape_seed).val.len()
    }

    /// Held-out shapes trials draw from.
    pub fn shape_pool(&self) -> Result<Vec<ObjectShape>, HarnessError> {
        let m = SplitManifest::standard(self.shape_seed);
        Ok(m.shapes(&m.val)?)
    }

    /// Model for a condition: the `models` entry under `key`, else `model`.
    pub fn load_model(&self, key: &str) -> Result<EncoderModel, HarnessError> {
        match self.models.get(key).or(self.model.as_ref()) {
            Some(p) => Ok(EncoderModel::load(p)?),
            None => Err(HarnessError::MissingModel(self.experiment.name())),
        }
    }
}

