//! Layered configuration.
//!
//! Resolution order, weakest first: built-in defaults, the TOML config file
//! (`--config` or `AIGVE_CONFIG`), `AIGVE_*` environment variables, then
//! command-line flags. The fully resolved result is serialized into the run
//! manifest, so a run can be reproduced from its outputs alone.
//!
//! Endpoint configs carry the *name* of the environment variable holding the
//! bearer token, never the token itself, so manifests stay safe to share.

use crate::error::CliError;
use aigve_core::clock::{Clock, LogicalClock, SystemClock};
use aigve_core::sampler::SamplerConfig;
use aigve_core::weighter::DEFAULT_ALPHA;
use aigve_gateway::EndpointConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

/// Agent roles an endpoint can be configured for.
const ROLES: [&str; 4] = ["evaluator", "generator", "revisor", "judge"];

/// Flags accepted by every subcommand.
#[derive(Debug, clap::Args)]
pub struct GlobalArgs {
    /// TOML config file (AIGVE_CONFIG works too).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed recorded in the run manifest for randomized steps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker pool size for batch stages.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,

    /// Drive persisted timestamps from a logical counter instead of the wall
    /// clock, making repeat runs byte-identical.
    #[arg(long, global = true)]
    pub deterministic_clock: bool,
}

/// Sampler knobs shared by the subcommands that decode frames.
#[derive(Debug, clap::Args)]
pub struct SamplerArgs {
    /// Changed-pixel fraction a frame must exceed to qualify.
    #[arg(long)]
    pub theta: Option<f64>,

    /// Minimum index gap between kept frames.
    #[arg(long)]
    pub gamma: Option<usize>,

    /// Budget of frames to keep.
    #[arg(long)]
    pub target_n: Option<usize>,

    /// Per-pixel intensity tolerance before a pixel counts as changed.
    #[arg(long)]
    pub delta: Option<u8>,
}

/// Endpoint fields a subcommand can override from the command line.
#[derive(Debug, Default)]
pub struct EndpointOverrides {
    pub url: Option<String>,
    pub model: Option<String>,
    pub auth_env: Option<String>,
}

// The on-disk shape. Every field is optional; unknown keys are rejected so
// typos surface as errors instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    endpoints: BTreeMap<String, FileEndpoint>,
    #[serde(default)]
    sampler: FileSampler,
    #[serde(default)]
    refine: FileRefine,
    #[serde(default)]
    weigh: FileWeigh,
    #[serde(default)]
    run: FileRun,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEndpoint {
    url: Option<String>,
    model: Option<String>,
    auth_env: Option<String>,
    timeout_ms: Option<u64>,
    max_retries: Option<u32>,
    parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSampler {
    theta: Option<f64>,
    gamma: Option<usize>,
    target_n: Option<usize>,
    delta: Option<u8>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRefine {
    max_iterations: Option<usize>,
    stop_threshold: Option<f64>,
    selection_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWeigh {
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRun {
    seed: Option<u64>,
    parallel: Option<usize>,
    deterministic_clock: Option<bool>,
}

/// Partially specified endpoint, accumulated across layers until a command
/// asks for the role and the URL requirement is enforced.
#[derive(Debug, Clone, Default)]
struct EndpointDraft {
    url: Option<String>,
    model: Option<String>,
    auth_env: Option<String>,
    timeout_ms: Option<u64>,
    max_retries: Option<u32>,
    parallelism: Option<usize>,
}

/// The fully resolved configuration a command runs with. Serialized verbatim
/// into the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub sampler: SamplerConfig,
    pub max_iterations: usize,
    pub stop_threshold: f64,
    pub selection_threshold: f64,
    pub alpha: f64,
    pub seed: u64,
    pub parallel: usize,
    pub deterministic_clock: bool,
    /// Endpoints the command actually resolved, by role.
    pub endpoints: BTreeMap<String, EndpointConfig>,
    #[serde(skip)]
    drafts: BTreeMap<String, EndpointDraft>,
}

impl Settings {
    /// Resolves defaults, config file, environment, and the global flags.
    /// Subcommand flags are layered on afterwards via the `override_*` and
    /// [`Settings::endpoint`] methods.
    pub fn resolve(global: &GlobalArgs) -> Result<Self, CliError> {
        let file = load_config_file(global)?;
        for role in file.endpoints.keys() {
            if !ROLES.contains(&role.as_str()) {
                return Err(CliError::Input(format!(
                    "unknown endpoint role '{role}' in config file (expected one of: {})",
                    ROLES.join(", ")
                )));
            }
        }

        let mut settings = Settings {
            sampler: SamplerConfig::default(),
            max_iterations: 4,
            stop_threshold: 4.0,
            selection_threshold: 3.0,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            parallel: 1,
            deterministic_clock: false,
            endpoints: BTreeMap::new(),
            drafts: BTreeMap::new(),
        };

        // File layer.
        let s = &file.sampler;
        apply(&mut settings.sampler.theta, s.theta);
        apply(&mut settings.sampler.gamma, s.gamma);
        apply(&mut settings.sampler.target_n, s.target_n);
        apply(&mut settings.sampler.delta, s.delta);
        let r = &file.refine;
        apply(&mut settings.max_iterations, r.max_iterations);
        apply(&mut settings.stop_threshold, r.stop_threshold);
        apply(&mut settings.selection_threshold, r.selection_threshold);
        apply(&mut settings.alpha, file.weigh.alpha);
        apply(&mut settings.seed, file.run.seed);
        apply(&mut settings.parallel, file.run.parallel);
        apply(&mut settings.deterministic_clock, file.run.deterministic_clock);

        // Environment layer.
        apply(&mut settings.sampler.theta, env_parse("AIGVE_THETA")?);
        apply(&mut settings.sampler.gamma, env_parse("AIGVE_GAMMA")?);
        apply(&mut settings.sampler.target_n, env_parse("AIGVE_TARGET_N")?);
        apply(&mut settings.sampler.delta, env_parse("AIGVE_DELTA")?);
        apply(&mut settings.max_iterations, env_parse("AIGVE_MAX_ITERATIONS")?);
        apply(&mut settings.stop_threshold, env_parse("AIGVE_STOP_THRESHOLD")?);
        apply(
            &mut settings.selection_threshold,
            env_parse("AIGVE_SELECTION_THRESHOLD")?,
        );
        apply(&mut settings.alpha, env_parse("AIGVE_ALPHA")?);
        apply(&mut settings.seed, env_parse("AIGVE_SEED")?);
        apply(&mut settings.parallel, env_parse("AIGVE_PARALLEL")?);
        apply(
            &mut settings.deterministic_clock,
            env_parse("AIGVE_DETERMINISTIC_CLOCK")?,
        );

        // Global flags.
        apply(&mut settings.seed, global.seed);
        apply(&mut settings.parallel, global.parallel);
        if global.deterministic_clock {
            settings.deterministic_clock = true;
        }

        // Endpoint drafts: file section, then environment.
        for role in ROLES {
            let mut draft = EndpointDraft::default();
            if let Some(section) = file.endpoints.get(role) {
                draft.url.clone_from(&section.url);
                draft.model.clone_from(&section.model);
                draft.auth_env.clone_from(&section.auth_env);
                draft.timeout_ms = section.timeout_ms;
                draft.max_retries = section.max_retries;
                draft.parallelism = section.parallelism;
            }
            let upper = role.to_uppercase();
            apply_some(&mut draft.url, env_var(&format!("AIGVE_{upper}_URL")));
            apply_some(&mut draft.model, env_var(&format!("AIGVE_{upper}_MODEL")));
            apply_some(
                &mut draft.auth_env,
                env_var(&format!("AIGVE_{upper}_AUTH_ENV")),
            );
            settings.drafts.insert(role.to_string(), draft);
        }

        Ok(settings)
    }

    /// Layers the sampler flags on and validates the result.
    pub fn override_sampler(&mut self, args: &SamplerArgs) -> Result<(), CliError> {
        apply(&mut self.sampler.theta, args.theta);
        apply(&mut self.sampler.gamma, args.gamma);
        apply(&mut self.sampler.target_n, args.target_n);
        apply(&mut self.sampler.delta, args.delta);
        self.sampler.validate()?;
        Ok(())
    }

    /// Resolves one role's endpoint (flags over environment over file) and
    /// records it for the manifest. Fails when no layer provided a URL.
    pub fn endpoint(
        &mut self,
        role: &str,
        overrides: EndpointOverrides,
    ) -> Result<EndpointConfig, CliError> {
        let draft = self.drafts.get(role).cloned().unwrap_or_default();
        let url = overrides.url.or(draft.url).ok_or_else(|| {
            CliError::Input(format!(
                "no {role} endpoint configured: pass --{role}-url, set AIGVE_{}_URL, \
                 or add [endpoints.{role}] to the config file",
                role.to_uppercase()
            ))
        })?;
        let model = overrides
            .model
            .or(draft.model)
            .unwrap_or_else(|| "default".to_string());
        let mut config = EndpointConfig::new(url, model);
        config.auth_env = overrides.auth_env.or(draft.auth_env);
        apply(&mut config.timeout_ms, draft.timeout_ms);
        apply(&mut config.max_retries, draft.max_retries);
        apply(&mut config.parallelism, draft.parallelism);
        self.endpoints.insert(role.to_string(), config.clone());
        Ok(config)
    }

    /// The clock every persisted timestamp flows through.
    pub fn clock(&self) -> Box<dyn Clock> {
        if self.deterministic_clock {
            Box::new(LogicalClock::default())
        } else {
            Box::new(SystemClock)
        }
    }
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(value) = value {
        *slot = value;
    }
}

fn apply_some<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn load_config_file(global: &GlobalArgs) -> Result<ConfigFile, CliError> {
    let path = global
        .config
        .clone()
        .or_else(|| env_var("AIGVE_CONFIG").map(PathBuf::from));
    match path {
        None => Ok(ConfigFile::default()),
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|value| !value.is_empty())
}

fn env_parse<T>(name: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    match env_var(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| CliError::Input(format!("{name}={raw}: {e}"))),
    }
}
