use rulkit_core::data::ScenarioConfig;
use rulkit_core::error::{Error, Result};
use rulkit_core::method::Method;
use rulkit_core::objectives::{KlMode, Weighting};
use rulkit_core::trainer::TrainConfig;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// The single structured config file. Every section is optional; defaults
/// fill anything missing, and command-line flags override config scalars
/// (flag > config > default). Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Option<ScenarioConfig>,
    pub train: Option<TrainSection>,
    pub evaluate: Option<EvaluateSection>,
    pub compare: Option<CompareSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub hidden: Option<Vec<usize>>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub pretrain_epochs: Option<usize>,
    pub n_mc_train: Option<usize>,
    pub n_mc_valid: Option<usize>,
    pub prior_scale: Option<f64>,
    pub q_scale: Option<f64>,
    pub dropout_p: Option<f64>,
    pub lambda: Option<f64>,
    pub weighting: Option<Weighting>,
    pub kl_mode: Option<KlMode>,
    pub k_pool: Option<usize>,
    pub k_members: Option<usize>,
    pub subset_seed: Option<u64>,
    pub parallel_ensemble: Option<bool>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        set!(
            hidden,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            pretrain_epochs,
            n_mc_train,
            n_mc_valid,
            prior_scale,
            q_scale,
            dropout_p,
            lambda,
            weighting,
            kl_mode,
            k_pool,
            k_members,
            parallel_ensemble
        );
        if self.subset_seed.is_some() {
            cfg.subset_seed = self.subset_seed;
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Use the reduced desk-scale epoch budget as the baseline.
    pub desk: Option<bool>,
    #[serde(flatten)]
    pub base: TrainOverrides,
    /// Per-method overrides keyed by method tag.
    pub methods: BTreeMap<String, TrainOverrides>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub mc_samples: usize,
    pub lifetime_bins: usize,
    pub confidence_levels: usize,
    pub split: String,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            mc_samples: 100,
            lifetime_bins: 10,
            confidence_levels: 20,
            split: "test".to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("config parse ({}): {e}", path.display())))
}

/// Scenario resolution: a provided config file must contain the `scenario`
/// section; with no config the desk preset applies.
pub fn resolve_scenario(config: &RunConfig, had_file: bool) -> Result<ScenarioConfig> {
    match (&config.scenario, had_file) {
        (Some(s), _) => Ok(s.clone()),
        (None, false) => Ok(ScenarioConfig::default()),
        (None, true) => Err(Error::config("config is missing the `scenario` section")),
    }
}

/// Layered training config: method defaults (desk or full budget), then the
/// config file's base and per-method overrides, then flags upstream.
pub fn resolve_train(
    config: &RunConfig,
    method: Method,
    seed: u64,
    desk_flag: bool,
) -> Result<TrainConfig> {
    let section = config.train.as_ref();
    let desk = desk_flag || section.and_then(|s| s.desk).unwrap_or(false);
    let mut cfg = if desk {
        TrainConfig::desk(method, seed)
    } else {
        TrainConfig::for_method(method, seed)
    };
    if let Some(section) = section {
        for key in section.methods.keys() {
            Method::parse(key)?;
        }
        section.base.apply(&mut cfg);
        if let Some(overrides) = section.methods.get(method.as_str()) {
            overrides.apply(&mut cfg);
        }
    }
    Ok(cfg)
}

pub fn resolve_evaluate(config: &RunConfig) -> EvaluateSection {
    config.evaluate.clone().unwrap_or_default()
}
