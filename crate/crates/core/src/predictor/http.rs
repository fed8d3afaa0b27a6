use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use super::protocol::{predict_request, Request, Response};
use super::{check_input_shape, ModelInfo, PredictionRecord, Predictor, RemoteOptions};
use crate::error::{Error, Result};
use crate::tensor_io::ImageTensor;

/// Client for a predictor served over HTTP: every protocol message is
/// `POST`ed as JSON to a single endpoint URL.
pub struct HttpPredictor {
    url: String,
    agent: ureq::Agent,
    info: ModelInfo,
    next_id: AtomicU64,
    options: RemoteOptions,
}

impl HttpPredictor {
    /// Connects and performs the metadata handshake.
    pub fn connect(url: &str, options: RemoteOptions) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = serde_json::to_string(&Request::Metadata).expect("request serializes");
        let text = post_with_retry(&agent, url, &body, &options)?;
        let info: ModelInfo = serde_json::from_str(&text).map_err(|e| Error::Transport {
            attempts: 1,
            message: format!("bad metadata response {text:?}: {e}"),
        })?;
        Ok(Self {
            url: url.to_string(),
            agent,
            info,
            next_id: AtomicU64::new(1),
            options,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn post_with_retry(
    agent: &ureq::Agent,
    url: &str,
    body: &str,
    options: &RemoteOptions,
) -> Result<String> {
    let attempts = options.retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match post_once(agent, url, body) {
            Ok(text) => return Ok(text),
            Err(message) => {
                last = message;
                if attempt < attempts {
                    std::thread::sleep(options.retry_backoff * 2u32.pow(attempt - 1));
                }
            }
        }
    }
    Err(Error::Transport {
        attempts,
        message: format!("{url}: {last}"),
    })
}

fn post_once(agent: &ureq::Agent, url: &str, body: &str) -> std::result::Result<String, String> {
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    if status.is_server_error() {
        return Err(format!("HTTP {status}: {text}"));
    }
    if !status.is_success() && !text.trim_start().starts_with('{') {
        return Err(format!("HTTP {status}: {text}"));
    }
    Ok(text)
}

impl Predictor for HttpPredictor {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        check_input_shape(&self.info, x)?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = serde_json::to_string(&predict_request(id, x)).expect("request serializes");
        let text = post_with_retry(&self.agent, &self.url, &body, &self.options)?;
        let resp: Response = serde_json::from_str(&text).map_err(|e| Error::Transport {
            attempts: 1,
            message: format!("unparsable response {text:?}: {e}"),
        })?;
        if resp.id != Some(id) {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("response id {:?} does not match request id {id}", resp.id),
            });
        }
        match (resp.probs, resp.error) {
            (_, Some(message)) => Err(Error::Remote { id, message }),
            (Some(probs), None) => PredictionRecord::from_probs(probs),
            (None, None) => Err(Error::Remote {
                id,
                message: "response carries neither probs nor error".into(),
            }),
        }
    }

    /// Issues up to `max_in_flight` requests concurrently; results come back
    /// in input order regardless of completion order.
    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        for x in xs {
            check_input_shape(&self.info, x)?;
        }
        let slots: Vec<Mutex<Option<Result<PredictionRecord>>>> =
            xs.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        let workers = self.options.max_in_flight.clamp(1, xs.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= xs.len() {
                        break;
                    }
                    *slots[i].lock().unwrap() = Some(self.predict(&xs[i]));
                });
            }
        });

        let mut out = Vec::with_capacity(xs.len());
        let mut failed = Vec::new();
        for (i, slot) in slots.into_iter().enumerate() {
            match slot.into_inner().unwrap().expect("every index was claimed") {
                Ok(r) => out.push(r),
                Err(e) if e.is_transport() => return Err(e),
                Err(e) => failed.push((i, e.to_string())),
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(Error::Batch { failed })
        }
    }
}
