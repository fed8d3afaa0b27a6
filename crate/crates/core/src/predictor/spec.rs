use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use super::{EchoPredictor, HttpPredictor, LinearSoftmaxModel, Predictor, StdioPredictor};
use crate::error::{Error, Result};

/// Knobs for the remote clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOptions {
    /// Requests allowed in flight at once per batch.
    pub max_in_flight: usize,
    /// Extra attempts after a transport failure (HTTP only).
    pub retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub retry_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            retries: 2,
            retry_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Where predictions come from, as written on the command line or in a run
/// config:
///
/// - `builtin:linear:<model.json>`: a [`LinearSoftmaxModel`] file
/// - `builtin:echo:<H>x<W>x<C>:<p0>,<p1>,...`: fixed distribution
/// - `http:<host:port/path>` or a full `http://...` URL
/// - `stdio:<shell command>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    Builtin(String),
    Http(String),
    Stdio(String),
}

impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "predictor must be builtin:<spec>, http:<url> or stdio:<cmd>, got {s:?}"
            ))
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "builtin" => Ok(PredictorSpec::Builtin(rest.to_string())),
            "http" if rest.starts_with("//") => Ok(PredictorSpec::Http(s.to_string())),
            "http" => Ok(PredictorSpec::Http(format!("http://{rest}"))),
            "stdio" => Ok(PredictorSpec::Stdio(rest.to_string())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorSpec::Builtin(s) => write!(f, "builtin:{s}"),
            PredictorSpec::Http(url) => f.write_str(url),
            PredictorSpec::Stdio(cmd) => write!(f, "stdio:{cmd}"),
        }
    }
}

impl PredictorSpec {
    pub fn is_remote(&self) -> bool {
        !matches!(self, PredictorSpec::Builtin(_))
    }

    pub fn connect(&self, options: &RemoteOptions) -> Result<Box<dyn Predictor>> {
        match self {
            PredictorSpec::Builtin(spec) => build_builtin(spec),
            PredictorSpec::Http(url) => Ok(Box::new(HttpPredictor::connect(url, options.clone())?)),
            PredictorSpec::Stdio(cmd) => Ok(Box::new(StdioPredictor::spawn(cmd, options.clone())?)),
        }
    }
}

fn build_builtin(spec: &str) -> Result<Box<dyn Predictor>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "linear" if !arg.is_empty() => Ok(Box::new(LinearSoftmaxModel::load(arg)?)),
        "echo" => {
            let (shape, probs) = arg.split_once(':').ok_or_else(|| {
                Error::Config(format!(
                    "echo spec must be echo:<H>x<W>x<C>:<p0>,<p1>,..., got {spec:?}"
                ))
            })?;
            let dims: Vec<usize> = shape
                .split('x')
                .map(|d| d.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad echo shape {shape:?}: {e}")))?;
            let input_shape: [usize; 3] = dims.try_into().map_err(|_| {
                Error::Config(format!("echo shape must have 3 dims, got {shape:?}"))
            })?;
            let probs: Vec<f64> = probs
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad echo probabilities {probs:?}: {e}")))?;
            Ok(Box::new(EchoPredictor::new(input_shape, probs)?))
        }
        _ => Err(Error::Config(format!(
            "unknown builtin predictor {spec:?}; expected linear:<path> or echo:<HxWxC>:<probs>"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::ImageTensor;

    #[test]
    fn parses_kinds() {
        assert_eq!(
            "http://127.0.0.1:9000/".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::Http("http://127.0.0.1:9000/".into())
        );
        assert_eq!(
            "http:localhost:9000".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::Http("http://localhost:9000".into())
        );
        assert_eq!(
            "stdio:python3 serve.py --stdio"
                .parse::<PredictorSpec>()
                .unwrap(),
            PredictorSpec::Stdio("python3 serve.py --stdio".into())
        );
        assert!("grpc:foo".parse::<PredictorSpec>().is_err());
        assert!("builtin:".parse::<PredictorSpec>().is_err());
        assert!("nocolon".parse::<PredictorSpec>().is_err());
    }

    #[test]
    fn builtin_echo() {
        let spec: PredictorSpec = "builtin:echo:2x2x3:0.25,0.75".parse().unwrap();
        let p = spec.connect(&RemoteOptions::default()).unwrap();
        assert_eq!(p.info().input_shape, [2, 2, 3]);
        let r = p
            .predict(&ImageTensor::filled(2, 2, 3, 0.0).unwrap())
            .unwrap();
        assert_eq!(r.probs, vec![0.25, 0.75]);
        assert!("builtin:echo:2x2:0.5,0.5"
            .parse::<PredictorSpec>()
            .unwrap()
            .connect(&RemoteOptions::default())
            .is_err());
        assert!("builtin:nope"
            .parse::<PredictorSpec>()
            .unwrap()
            .connect(&RemoteOptions::default())
            .is_err());
    }
}
