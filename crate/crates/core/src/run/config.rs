//! Run configuration: a JSON file, command-line overrides and defaults,
//! merged in that order of increasing precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::predictor::{PredictorSpec, RemoteOptions};

pub const DEFAULT_K: usize = 10;
/// Subset counts for the granularity sweep.
pub const K_SWEEP: [usize; 3] = [5, 10, 20];
pub const DEFAULT_OUT_DIR: &str = "saco-out";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<PathBuf>,
    predictor: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
    methods: Option<Vec<String>>,
    cache: Option<bool>,
    #[serde(default)]
    remote: RemoteFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoteFile {
    max_in_flight: Option<usize>,
    retries: Option<u32>,
    retry_backoff_ms: Option<u64>,
    timeout_secs: Option<u64>,
}

/// Values given on the command line. Paths are taken as given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub predictor: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub max_in_flight: usize,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        let d = RemoteOptions::default();
        Self {
            max_in_flight: d.max_in_flight,
            retries: d.retries,
            retry_backoff_ms: d.retry_backoff.as_millis() as u64,
            timeout_secs: d.timeout.as_secs(),
        }
    }
}

impl RemoteConfig {
    pub fn options(&self) -> RemoteOptions {
        RemoteOptions {
            max_in_flight: self.max_in_flight,
            retries: self.retries,
            retry_backoff: Duration::from_millis(self.retry_backoff_ms),
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

/// Fully resolved configuration. Relative paths from a config file have
/// been joined onto the file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub predictor: String,
    pub k: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Restrict evaluation to these explanation methods.
    pub methods: Option<Vec<String>>,
    /// Reuse predictions of identical images within a run.
    pub cache: bool,
    pub remote: RemoteConfig,
}

/// Rewrites a `builtin:linear:<path>` spec so a relative model path is
/// relative to `base`.
fn rebase_predictor(spec: &str, base: &Path) -> String {
    match spec.strip_prefix("builtin:linear:") {
        Some(path) if Path::new(path).is_relative() => {
            format!("builtin:linear:{}", base.join(path).display())
        }
        _ => spec.to_string(),
    }
}

impl RunConfig {
    /// Merges an optional config file with overrides and validates the
    /// result.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let (cf, base) = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let cf: ConfigFile = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (cf, base)
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };

        let dataset = match (&overrides.dataset, cf.dataset) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => return Err(Error::Config("no dataset manifest given".into())),
        };
        let predictor = match (&overrides.predictor, cf.predictor) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => rebase_predictor(&s, &base),
            (None, None) => return Err(Error::Config("no predictor given".into())),
        };
        let out_dir = match (&overrides.out_dir, cf.out_dir) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => base.join(DEFAULT_OUT_DIR),
        };
        let defaults = RemoteConfig::default();
        let config = RunConfig {
            dataset,
            predictor,
            k: overrides.k.or(cf.k).unwrap_or(DEFAULT_K),
            seed: overrides.seed.or(cf.seed).unwrap_or(0),
            workers: overrides.workers.or(cf.workers).unwrap_or(1),
            out_dir,
            methods: cf.methods,
            cache: cf.cache.unwrap_or(true),
            remote: RemoteConfig {
                max_in_flight: cf.remote.max_in_flight.unwrap_or(defaults.max_in_flight),
                retries: cf.remote.retries.unwrap_or(defaults.retries),
                retry_backoff_ms: cf
                    .remote
                    .retry_backoff_ms
                    .unwrap_or(defaults.retry_backoff_ms),
                timeout_secs: cf.remote.timeout_secs.unwrap_or(defaults.timeout_secs),
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.remote.max_in_flight == 0 {
            return Err(Error::Config(
                "remote.max_in_flight must be at least 1".into(),
            ));
        }
        if self.remote.timeout_secs == 0 {
            return Err(Error::Config("remote.timeout_secs must be positive".into()));
        }
        if matches!(&self.methods, Some(m) if m.is_empty()) {
            return Err(Error::Config(
                "methods, when given, must not be empty".into(),
            ));
        }
        self.predictor_spec()?;
        Ok(())
    }

    pub fn predictor_spec(&self) -> Result<PredictorSpec> {
        self.predictor.parse()
    }

    /// Hex SHA-256 of the compact JSON serialisation.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// JSON Schema for config files.
pub fn config_schema() -> serde_json::Value {
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "saco run configuration",
        "type": "object",
        "additionalProperties": false,
        "properties": {
            "dataset": {"type": "string", "description": "dataset manifest, relative to this file"},
            "predictor": {
                "type": "string",
                "description": "builtin:linear:<model.json> | builtin:echo:<HxWxC>:<p0,p1,...> | http:<url> | stdio:<command>"
            },
            "k": {"type": "integer", "minimum": 2, "default": DEFAULT_K},
            "seed": {"type": "integer", "minimum": 0, "default": 0},
            "workers": {"type": "integer", "minimum": 1, "default": 1},
            "out_dir": {"type": "string", "default": DEFAULT_OUT_DIR},
            "methods": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "cache": {"type": "boolean", "default": true},
            "remote": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "max_in_flight": {"type": "integer", "minimum": 1, "default": 4},
                    "retries": {"type": "integer", "minimum": 0, "default": 2},
                    "retry_backoff_ms": {"type": "integer", "minimum": 0, "default": 100},
                    "timeout_secs": {"type": "integer", "minimum": 1, "default": 120}
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("run.json");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"dataset": "data/m.json", "predictor": "builtin:linear:model.json", "k": 5, "seed": 3}"#,
        );
        let cfg = RunConfig::resolve(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.dataset, dir.path().join("data/m.json"));
        assert_eq!(cfg.out_dir, dir.path().join(DEFAULT_OUT_DIR));
        assert_eq!(
            cfg.predictor,
            format!("builtin:linear:{}", dir.path().join("model.json").display())
        );

        let o = Overrides {
            k: Some(20),
            workers: Some(4),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&p), &o).unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.workers), (20, 3, 4));
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let bad = [
            r#"{"dataset": "m.json", "predictor": "builtin:echo:1x1x1:1,0", "k": 1}"#,
            r#"{"dataset": "m.json", "predictor": "ftp:nowhere"}"#,
            r#"{"dataset": "m.json", "predictor": "builtin:echo:1x1x1:1,0", "colour": "red"}"#,
            r#"{"predictor": "builtin:echo:1x1x1:1,0"}"#,
            r#"{"dataset": "m.json", "predictor": "builtin:echo:1x1x1:1,0", "workers": 0}"#,
            "not json",
        ];
        for text in bad {
            let p = write(dir.path(), text);
            let err = RunConfig::resolve(Some(&p), &Overrides::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
        assert!(RunConfig::resolve(
            Some(&dir.path().join("missing.json")),
            &Overrides::default()
        )
        .is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let o = Overrides {
            dataset: Some("m.json".into()),
            predictor: Some("builtin:echo:1x1x1:1,0".into()),
            ..Default::default()
        };
        let a = RunConfig::resolve(None, &o).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        let json = serde_json::to_string(&a).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.digest(), a.digest());
    }
}
