//! Declarative run configuration.
//!
//! A run is described by a single TOML file; command-line flags may override
//! fields that exist here but never introduce new state. Mode-dependent
//! defaults (environment, reward, schedule, init, output paths) are filled by
//! [`RunConfig::resolved`], validation collects every violation at once, and
//! the digest of the resolved config is embedded into every artifact header
//! so a run can be reproduced from its outputs.

use crate::env::EnvSpec;
use crate::grpo::GrpoHyperParams;
use crate::pipeline::backend::{GenBackend, RemoteBackend, ReplayBackend};
use crate::reward::RewardSpec;
use crate::rngs::fnv1a64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Zero,
    Ptst,
    Pipeline,
    Stats,
    Dynamics,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mode::Zero => "zero",
            Mode::Ptst => "ptst",
            Mode::Pipeline => "pipeline",
            Mode::Stats => "stats",
            Mode::Dynamics => "dynamics",
        };
        f.write_str(name)
    }
}

/// Where the initial policy comes from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitSource {
    /// Mode default: `primed` for zero runs, `cold` for ptst runs.
    #[default]
    ModeDefault,
    /// All-zero logits (the uniform policy).
    Uniform,
    /// Uniform plus the tag-scaffold prior standing in for the system prompt.
    Primed,
    /// Built-in cold-start construction.
    Cold,
    /// Load a checkpoint file: `checkpoint:<path>`.
    Checkpoint(String),
}

impl TryFrom<String> for InitSource {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        match value.as_str() {
            "" | "mode_default" => Ok(InitSource::ModeDefault),
            "uniform" => Ok(InitSource::Uniform),
            "primed" => Ok(InitSource::Primed),
            "cold" => Ok(InitSource::Cold),
            other => match other.strip_prefix("checkpoint:") {
                Some(path) if !path.trim().is_empty() => {
                    Ok(InitSource::Checkpoint(path.trim().to_string()))
                }
                _ => Err(format!(
                    "bad init {value:?}: expected uniform | primed | cold | checkpoint:<path>"
                )),
            },
        }
    }
}

impl From<InitSource> for String {
    fn from(value: InitSource) -> Self {
        match value {
            InitSource::ModeDefault => "mode_default".into(),
            InitSource::Uniform => "uniform".into(),
            InitSource::Primed => "primed".into(),
            InitSource::Cold => "cold".into(),
            InitSource::Checkpoint(path) => format!("checkpoint:{path}"),
        }
    }
}

/// GRPO hyperparameters as written in the config file. Unset fields resolve
/// to defaults; the learning rate resolves per mode because the regimes
/// differ sharply in per-key visit counts (zero mode spreads 300 steps over
/// 100 arithmetic keys, staged runs revisit a handful of oracle keys every
/// step).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParamsSection {
    #[serde(default)]
    pub clip_epsilon: Option<f64>,
    #[serde(default)]
    pub kl_beta: Option<f64>,
    #[serde(default)]
    pub inner_updates: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub ratio_log_clamp: Option<f64>,
}

/// Learning rate used when the config leaves it unset.
pub fn default_learning_rate(mode: Mode) -> f64 {
    match mode {
        Mode::Zero => 32.0,
        _ => 1.0,
    }
}

impl HyperParamsSection {
    pub fn materialize(&self, mode: Mode) -> GrpoHyperParams {
        let base = GrpoHyperParams::default();
        GrpoHyperParams {
            clip_epsilon: self.clip_epsilon.unwrap_or(base.clip_epsilon),
            kl_beta: self.kl_beta.unwrap_or(base.kl_beta),
            inner_updates: self.inner_updates.unwrap_or(base.inner_updates),
            learning_rate: self.learning_rate.unwrap_or_else(|| default_learning_rate(mode)),
            ratio_log_clamp: self.ratio_log_clamp.unwrap_or(base.ratio_log_clamp),
        }
    }

    fn fill_from(&mut self, hp: GrpoHyperParams) {
        self.clip_epsilon = Some(hp.clip_epsilon);
        self.kl_beta = Some(hp.kl_beta);
        self.inner_updates = Some(hp.inner_updates);
        self.learning_rate = Some(hp.learning_rate);
        self.ratio_log_clamp = Some(hp.ratio_log_clamp);
    }
}

/// Cold-start policy shape, mirrored from the policy module with config
/// defaults.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColdStartConfig {
    #[serde(default = "d::long_fraction")]
    pub long_fraction: f64,
    #[serde(default = "d::short_mean_think")]
    pub short_mean_think: f64,
    #[serde(default = "d::long_mean_think")]
    pub long_mean_think: f64,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        Self {
            long_fraction: d::long_fraction(),
            short_mean_think: d::short_mean_think(),
            long_mean_think: d::long_mean_think(),
        }
    }
}

impl ColdStartConfig {
    pub fn style(&self) -> crate::policy::ColdStartStyle {
        crate::policy::ColdStartStyle {
            long_fraction: self.long_fraction,
            short_mean_think: self.short_mean_think,
            long_mean_think: self.long_mean_think,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Desk-scale divisor applied to the 4K/8K/16K stage caps.
    #[serde(default = "d::scale_divisor")]
    pub scale_divisor: usize,
    #[serde(default = "d::questions_per_step")]
    pub questions_per_step: usize,
    #[serde(default)]
    pub init: InitSource,
    /// Strength of the tag-scaffold prior used by `primed` init.
    #[serde(default = "d::format_bias")]
    pub format_bias: f64,
    /// Append the optional third stage to the default schedule.
    #[serde(default)]
    pub use_third_stage: bool,
    #[serde(default = "d::num_fillers")]
    pub num_fillers: usize,
    #[serde(default)]
    pub cold_start: ColdStartConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scale_divisor: d::scale_divisor(),
            questions_per_step: d::questions_per_step(),
            init: InitSource::default(),
            format_bias: d::format_bias(),
            use_third_stage: false,
            num_fillers: d::num_fillers(),
            cold_start: ColdStartConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "d::seeds")]
    pub seeds: usize,
    #[serde(default = "d::eval_rollouts")]
    pub eval_rollouts_per_question: usize,
    /// Steps on each side of the stage boundary averaged for the length
    /// comparison.
    #[serde(default = "d::boundary_window")]
    pub boundary_window: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            seeds: d::seeds(),
            eval_rollouts_per_question: d::eval_rollouts(),
            boundary_window: d::boundary_window(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// "replay" or "remote".
    #[serde(default = "d::backend_kind")]
    pub kind: String,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "d::backend_model")]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "d::auth_env")]
    pub auth_env: String,
    #[serde(default = "d::timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "d::max_retries")]
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: d::backend_kind(),
            fixture_dir: None,
            base_url: None,
            model: d::backend_model(),
            auth_env: d::auth_env(),
            timeout_secs: d::timeout_secs(),
            max_retries: d::max_retries(),
        }
    }
}

impl BackendConfig {
    /// Build the backend, pushing any problems onto `errors`.
    pub fn build(
        &self,
        label: &str,
        fallback_fixtures: Option<&Path>,
        errors: &mut Vec<String>,
    ) -> Option<GenBackend> {
        match self.kind.as_str() {
            "replay" => {
                let dir = self
                    .fixture_dir
                    .clone()
                    .or_else(|| fallback_fixtures.map(Path::to_path_buf));
                match dir {
                    Some(dir) => Some(GenBackend::Replay(ReplayBackend::new(dir, &self.model))),
                    None => {
                        errors.push(format!(
                            "pipeline.{label}: replay backend needs fixture_dir (or paths.fixture_dir)"
                        ));
                        None
                    }
                }
            }
            "remote" => match &self.base_url {
                Some(url) => Some(GenBackend::Remote(RemoteBackend {
                    base_url: url.clone(),
                    model: self.model.clone(),
                    auth_env: self.auth_env.clone(),
                    timeout: std::time::Duration::from_secs(self.timeout_secs),
                    max_retries: self.max_retries,
                })),
                None => {
                    errors.push(format!("pipeline.{label}: remote backend needs base_url"));
                    None
                }
            },
            other => {
                errors.push(format!(
                    "pipeline.{label}: unknown backend kind {other:?} (expected replay | remote)"
                ));
                None
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub temperature: f64,
    /// Recorded into pipeline metadata; config-supplied so outputs stay
    /// byte-deterministic.
    #[serde(default = "d::timestamp")]
    pub timestamp: String,
    #[serde(default = "d::max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub mllm: BackendConfig,
    #[serde(default)]
    pub reasoning: BackendConfig,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            timestamp: d::timestamp(),
            max_in_flight: d::max_in_flight(),
            mllm: BackendConfig::default(),
            reasoning: BackendConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "d::markers")]
    pub markers: Vec<String>,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            markers: d::markers(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTable {
    pub max_len: usize,
    pub group_size: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default)]
    pub stages: Vec<StageTable>,
}

impl ScheduleSection {
    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        self.stages
            .iter()
            .map(|s| (s.max_len, s.group_size, s.steps))
            .collect()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub metrics_out: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_out: Option<PathBuf>,
    #[serde(default)]
    pub dataset_in: Option<PathBuf>,
    #[serde(default)]
    pub dataset_out: Option<PathBuf>,
    #[serde(default)]
    pub summary_out: Option<PathBuf>,
    #[serde(default)]
    pub rewrites_file: Option<PathBuf>,
    #[serde(default)]
    pub filters_file: Option<PathBuf>,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
}

mod d {
    pub fn seed() -> u64 {
        7
    }
    pub fn workers() -> usize {
        1
    }
    pub fn scale_divisor() -> usize {
        64
    }
    pub fn questions_per_step() -> usize {
        8
    }
    pub fn format_bias() -> f64 {
        3.0
    }
    pub fn num_fillers() -> usize {
        4
    }
    pub fn long_fraction() -> f64 {
        0.5
    }
    pub fn short_mean_think() -> f64 {
        8.0
    }
    pub fn long_mean_think() -> f64 {
        110.0
    }
    pub fn seeds() -> usize {
        5
    }
    pub fn eval_rollouts() -> usize {
        32
    }
    pub fn boundary_window() -> usize {
        10
    }
    pub fn backend_kind() -> String {
        "replay".into()
    }
    pub fn backend_model() -> String {
        "replay-model".into()
    }
    pub fn auth_env() -> String {
        "THINKRL_API_TOKEN".into()
    }
    pub fn timeout_secs() -> u64 {
        30
    }
    pub fn max_retries() -> u32 {
        2
    }
    pub fn timestamp() -> String {
        "1970-01-01T00:00:00Z".into()
    }
    pub fn max_in_flight() -> usize {
        4
    }
    pub fn markers() -> Vec<String> {
        crate::pipeline::markers::DEFAULT_MARKERS
            .iter()
            .map(|m| m.to_string())
            .collect()
    }
}

/// The whole run description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default = "d::seed")]
    pub seed: u64,
    /// Worker threads for sampling and pipeline requests. Execution detail:
    /// excluded from the config digest because results do not depend on it.
    #[serde(default = "d::workers")]
    pub workers: usize,
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default)]
    pub reward: Option<RewardSpec>,
    #[serde(default)]
    pub hyperparams: HyperParamsSection,
    #[serde(default)]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl RunConfig {
    /// A config with every default for the given mode.
    pub fn default_for(mode: Mode) -> Self {
        toml::from_str(&format!("mode = \"{mode}\"")).expect("defaults parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The GRPO hyperparameters this config runs with.
    pub fn effective_hyperparams(&self) -> GrpoHyperParams {
        self.hyperparams.materialize(self.mode)
    }

    /// Fill mode-dependent defaults, producing the effective config that
    /// runs, gets digested, and is echoed into artifacts.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        let hp = out.effective_hyperparams();
        out.hyperparams.fill_from(hp);
        if out.env.is_none() {
            out.env = Some(match out.mode {
                Mode::Zero => EnvSpec::arith(11),
                _ => EnvSpec::Oracle {
                    keys: 8,
                    seed: 11,
                    profile: crate::env::OracleProfile::default(),
                },
            });
        }
        if out.reward.is_none() {
            out.reward = Some(match out.mode {
                Mode::Zero => RewardSpec::zero(),
                _ => RewardSpec::hfrrf(),
            });
        }
        if out.train.init == InitSource::ModeDefault {
            out.train.init = match out.mode {
                Mode::Zero => InitSource::Primed,
                _ => InitSource::Cold,
            };
        }
        if out.schedule.is_none() {
            let divisor = out.train.scale_divisor.max(1);
            let stages: Vec<StageTable> = match out.mode {
                Mode::Zero => vec![StageTable {
                    max_len: 4096 / divisor,
                    group_size: 16,
                    steps: 300,
                }],
                _ => {
                    let mut stages = vec![
                        StageTable {
                            max_len: 4096 / divisor,
                            group_size: 16,
                            steps: 100,
                        },
                        StageTable {
                            max_len: 8192 / divisor,
                            group_size: 8,
                            steps: 100,
                        },
                    ];
                    if out.train.use_third_stage {
                        stages.push(StageTable {
                            max_len: 16384 / divisor,
                            group_size: 4,
                            steps: 100,
                        });
                    }
                    stages
                }
            };
            out.schedule = Some(ScheduleSection { stages });
        }
        let mode = out.mode;
        let default_path = |slot: &mut Option<PathBuf>, name: String| {
            if slot.is_none() {
                *slot = Some(PathBuf::from(name));
            }
        };
        match mode {
            Mode::Zero | Mode::Ptst => {
                default_path(&mut out.paths.metrics_out, format!("runs/{mode}_metrics.jsonl"));
                default_path(
                    &mut out.paths.checkpoint_out,
                    format!("runs/{mode}_policy.ckpt"),
                );
            }
            Mode::Dynamics => {
                default_path(
                    &mut out.paths.summary_out,
                    "runs/dynamics_summary.csv".to_string(),
                );
            }
            Mode::Pipeline => {
                default_path(&mut out.paths.dataset_out, "runs/cold_start.jsonl".to_string());
            }
            Mode::Stats => {
                default_path(&mut out.paths.summary_out, "runs/marker_stats.csv".to_string());
            }
        }
        out
    }

    /// Validate the (resolved) config, reporting every violation at once.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if self.workers == 0 {
            errors.push("workers must be at least 1".into());
        }
        if let Err(e) = self.effective_hyperparams().validate() {
            errors.push(e.to_string());
        }
        if let Some(reward) = &self.reward {
            if let Err(e) = reward.validate() {
                errors.push(format!("reward: {e}"));
            }
        }
        if let Some(env) = &self.env {
            if let Err(e) = env.validate() {
                errors.push(format!("env: {e}"));
            }
        }
        let divisor = self.train.scale_divisor;
        if divisor == 0 || 4096 % divisor != 0 || 4096 / divisor < 8 {
            errors.push(format!(
                "train.scale_divisor {divisor} must divide 4096 with quotient >= 8"
            ));
        }
        if self.train.questions_per_step == 0 {
            errors.push("train.questions_per_step must be at least 1".into());
        }
        if self.train.format_bias < 0.0 {
            errors.push("train.format_bias must be non-negative".into());
        }
        if self.train.num_fillers == 0 {
            errors.push("train.num_fillers must be at least 1".into());
        }
        let cs = &self.train.cold_start;
        if !(0.0..=1.0).contains(&cs.long_fraction) {
            errors.push("train.cold_start.long_fraction must lie in [0, 1]".into());
        }
        if cs.short_mean_think < 0.0 || cs.long_mean_think < cs.short_mean_think {
            errors.push("train.cold_start think means must satisfy 0 <= short <= long".into());
        }
        if let Some(section) = &self.schedule {
            if let Err(e) = crate::ptst::Schedule::from_triples(&section.triples()) {
                errors.push(format!("schedule: {e}"));
            }
        }
        match self.mode {
            Mode::Pipeline => {
                if self.paths.dataset_in.is_none() {
                    errors.push("pipeline mode requires paths.dataset_in".into());
                }
                if self.paths.dataset_out.is_none() {
                    errors.push("pipeline mode requires paths.dataset_out".into());
                }
                let fallback = self.paths.fixture_dir.clone();
                self.pipeline.mllm.build("mllm", fallback.as_deref(), &mut errors);
                self.pipeline
                    .reasoning
                    .build("reasoning", fallback.as_deref(), &mut errors);
                if self.pipeline.max_in_flight == 0 {
                    errors.push("pipeline.max_in_flight must be at least 1".into());
                }
            }
            Mode::Stats => {
                if self.paths.dataset_in.is_none() {
                    errors.push("stats mode requires paths.dataset_in".into());
                }
                if self.stats.markers.is_empty() {
                    errors.push("stats.markers must be non-empty".into());
                }
            }
            Mode::Dynamics => {
                if self.dynamics.seeds == 0 {
                    errors.push("dynamics.seeds must be at least 1".into());
                }
                if self.dynamics.eval_rollouts_per_question == 0 {
                    errors.push("dynamics.eval_rollouts_per_question must be at least 1".into());
                }
                if self.dynamics.boundary_window == 0 {
                    errors.push("dynamics.boundary_window must be at least 1".into());
                }
                if let Some(EnvSpec::Arith { .. }) = self.env {
                    errors.push(
                        "dynamics mode needs the oracle environment (the paired experiment \
                         measures length-profile effects)"
                            .into(),
                    );
                }
            }
            Mode::Zero | Mode::Ptst => {}
        }
        if let InitSource::Checkpoint(path) = &self.train.init {
            if path.trim().is_empty() {
                errors.push("train.init checkpoint path must be non-empty".into());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Stable digest of the resolved config. Worker counts (training workers
    /// and pipeline in-flight limit) are execution details and are normalized
    /// out, so runs that differ only in parallelism produce identical
    /// artifacts.
    pub fn digest(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.pipeline.max_in_flight = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        fnv1a64(json.as_bytes())
    }

    pub fn digest_hex(&self) -> String {
        format!("{:016x}", self.digest())
    }
}

/// Header object embedded as the first line (or leading comment) of every
/// artifact a run writes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub artifact: String,
    pub version: String,
    pub seed: u64,
    pub config_digest: String,
}

impl ArtifactHeader {
    pub fn new(artifact: &str, config: &RunConfig) -> Self {
        Self {
            artifact: artifact.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_digest: config.digest_hex(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }
}
