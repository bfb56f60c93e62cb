//! Run configuration: file (TOML or JSON), environment and explicit
//! overrides, resolved with overrides first, then environment, then file,
//! then defaults.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::backend::{mock_backend, BackendConfig, BackendKind, HttpConfig, MockConfig};
use crate::chains::Ablation;
use crate::harness::{RunMode, RunSpec, SplitSelector};
use crate::prompt::{EpisodeWindow, ModalitySet};

pub const ENV_ENDPOINT: &str = "DUALCHAIN_ENDPOINT";
pub const ENV_API_KEY: &str = "DUALCHAIN_API_KEY";
pub const ENV_CACHE: &str = "DUALCHAIN_CACHE";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

/// On-disk configuration. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub run: Option<RunSpec>,
    pub backend: Option<BackendConfig>,
}

impl ConfigFile {
    /// Reads TOML for `.toml` files and JSON otherwise. Relative paths are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.to_path_buf(), message };
        let mut cfg: ConfigFile = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.corpus);
        rebase(&mut cfg.runs_dir);
        rebase(&mut cfg.templates_dir);
        if let Some(b) = cfg.backend.as_mut() {
            rebase(&mut b.cache_dir);
            if let BackendKind::Mock(m) = &mut b.backend {
                rebase(&mut m.rules_path);
            }
        }
        Ok(cfg)
    }
}

/// Explicit settings, typically from command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<RunMode>,
    pub modalities: Option<ModalitySet>,
    pub window: Option<EpisodeWindow>,
    pub ablation: Option<Ablation>,
    pub frame_budget: Option<usize>,
    pub split: Option<SplitSelector>,
    /// `mock`, `http`, or an endpoint URL.
    pub backend: Option<String>,
    pub mock_rules: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub corpus: Option<PathBuf>,
    pub runs_dir: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub concurrency: usize,
    pub run: RunSpec,
    pub backend: BackendConfig,
}

fn http_from(endpoint: String, existing: Option<&HttpConfig>) -> HttpConfig {
    let mut h = existing.cloned().unwrap_or_else(|| HttpConfig::new(""));
    h.endpoint = endpoint;
    h
}

/// Merges the layers. `env` looks up environment variables.
pub fn resolve(
    file: Option<ConfigFile>,
    env: impl Fn(&str) -> Option<String>,
    ov: &Overrides,
) -> Result<AppConfig, ConfigError> {
    let file = file.unwrap_or_default();
    let mut run = file.run.unwrap_or_default();
    let mut backend = file.backend.unwrap_or_else(|| mock_backend(run.seed));
    let mut cache_dir = backend.cache_dir.clone();

    if let Some(endpoint) = env(ENV_ENDPOINT).filter(|s| !s.is_empty()) {
        let existing = match &backend.backend {
            BackendKind::Http(h) => Some(h.clone()),
            BackendKind::Mock(_) => None,
        };
        backend.backend = BackendKind::Http(http_from(endpoint, existing.as_ref()));
    }
    if let Some(dir) = env(ENV_CACHE).filter(|s| !s.is_empty()) {
        cache_dir = Some(PathBuf::from(dir));
    }

    if let Some(seed) = ov.seed {
        run.seed = seed;
        if let BackendKind::Mock(m) = &mut backend.backend {
            m.seed = seed;
        }
    }
    if let Some(b) = ov.backend.as_deref() {
        backend.backend = match b {
            "mock" => match &backend.backend {
                BackendKind::Mock(m) => BackendKind::Mock(m.clone()),
                BackendKind::Http(_) => BackendKind::Mock(MockConfig { seed: run.seed, ..MockConfig::default() }),
            },
            "http" => match (&backend.backend, env(ENV_ENDPOINT)) {
                (BackendKind::Http(h), _) => BackendKind::Http(h.clone()),
                (_, Some(e)) => BackendKind::Http(http_from(e, None)),
                _ => {
                    return Err(ConfigError::Invalid(format!(
                        "--backend http needs an endpoint ({ENV_ENDPOINT} or config)"
                    )))
                }
            },
            url if url.starts_with("http://") || url.starts_with("https://") => {
                let existing = match &backend.backend {
                    BackendKind::Http(h) => Some(h.clone()),
                    BackendKind::Mock(_) => None,
                };
                BackendKind::Http(http_from(url.to_string(), existing.as_ref()))
            }
            other => {
                return Err(ConfigError::Invalid(format!("unknown backend `{other}`: expected mock, http or a URL")))
            }
        };
    }
    if let (Some(p), BackendKind::Mock(m)) = (&ov.mock_rules, &mut backend.backend) {
        m.rules_path = Some(p.clone());
    }
    if let BackendKind::Http(h) = &mut backend.backend {
        if let Some(key) = env(ENV_API_KEY).filter(|s| !s.is_empty()) {
            h.api_key = Some(key);
        }
        if h.endpoint.is_empty() {
            return Err(ConfigError::Invalid("http backend without an endpoint".into()));
        }
    }
    if let Some(d) = &ov.cache_dir {
        cache_dir = Some(d.clone());
    }
    backend.cache_dir = cache_dir;

    if let Some(m) = ov.mode {
        run.mode = m;
    }
    if let Some(m) = ov.modalities {
        run.modalities = m;
    }
    if let Some(w) = ov.window {
        run.window = w;
    }
    if let Some(a) = ov.ablation {
        run.ablation = a;
    }
    if let Some(b) = ov.frame_budget {
        run.frame_budget = b;
    }
    if let Some(s) = ov.split {
        run.split = s;
    }
    let concurrency = ov.concurrency.or(file.concurrency).unwrap_or(backend.max_in_flight).max(1);
    backend.max_in_flight = concurrency;
    run.backend = backend.identity();

    Ok(AppConfig {
        corpus: ov.corpus.clone().or(file.corpus),
        runs_dir: ov.runs_dir.clone().or(file.runs_dir).unwrap_or_else(|| PathBuf::from("runs")),
        templates_dir: file.templates_dir,
        concurrency,
        run,
        backend,
    })
}

/// Environment lookup backed by the process environment.
pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_to_mock() {
        let c = resolve(None, no_env, &Overrides::default()).unwrap();
        assert!(matches!(c.backend.backend, BackendKind::Mock(_)));
        assert_eq!(c.runs_dir, PathBuf::from("runs"));
        assert_eq!(c.run.mode, RunMode::Plain);
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let file = ConfigFile {
            run: Some(RunSpec { mode: RunMode::Pcdcot, frame_budget: 16, ..RunSpec::default() }),
            backend: Some(BackendConfig { cache_dir: Some("file-cache".into()), ..mock_backend(1) }),
            ..ConfigFile::default()
        };
        let env = |k: &str| (k == ENV_CACHE).then(|| "env-cache".to_string());
        let c = resolve(Some(file.clone()), env, &Overrides::default()).unwrap();
        assert_eq!(c.backend.cache_dir, Some(PathBuf::from("env-cache")));
        assert_eq!(c.run.mode, RunMode::Pcdcot);
        assert_eq!(c.run.frame_budget, 16);

        let ov = Overrides { cache_dir: Some("flag-cache".into()), mode: Some(RunMode::Plain), ..Overrides::default() };
        let c = resolve(Some(file), env, &ov).unwrap();
        assert_eq!(c.backend.cache_dir, Some(PathBuf::from("flag-cache")));
        assert_eq!(c.run.mode, RunMode::Plain);
    }

    #[test]
    fn endpoint_env_selects_http_unless_flag_says_mock() {
        let env = |k: &str| match k {
            ENV_ENDPOINT => Some("http://127.0.0.1:9".to_string()),
            ENV_API_KEY => Some("secret".to_string()),
            _ => None,
        };
        let c = resolve(None, env, &Overrides::default()).unwrap();
        match &c.backend.backend {
            BackendKind::Http(h) => {
                assert_eq!(h.endpoint, "http://127.0.0.1:9");
                assert_eq!(h.api_key.as_deref(), Some("secret"));
            }
            other => panic!("{other:?}"),
        }
        let ov = Overrides { backend: Some("mock".into()), ..Overrides::default() };
        assert!(matches!(resolve(None, env, &ov).unwrap().backend.backend, BackendKind::Mock(_)));
    }

    #[test]
    fn toml_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "corpus = \"fixtures\"\n[run]\nmode = \"pcdcot\"\nmodalities = \"Q,F\"\nwindow = \"prev_1\"\n\n[backend]\nbackend = { kind = \"mock\", seed = 3, rules_path = \"rules.json\" }\n",
        )
        .unwrap();
        let f = ConfigFile::load(&p).unwrap();
        assert_eq!(f.corpus, Some(dir.path().join("fixtures")));
        let c = resolve(Some(f), no_env, &Overrides::default()).unwrap();
        assert_eq!(c.run.window, EpisodeWindow::Prev(1));
        assert!(!c.run.modalities.subtitles);
        match c.backend.backend {
            BackendKind::Mock(m) => assert_eq!(m.rules_path, Some(dir.path().join("rules.json"))),
            other => panic!("{other:?}"),
        }
    }
}
