use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::protocol::{predict_request, Request, Response};
use super::{check_input_shape, ModelInfo, PredictionRecord, Predictor, RemoteOptions};
use crate::error::{Error, Result};
use crate::tensor_io::ImageTensor;

/// How long a dropped adapter gets to exit after its input closes.
const EXIT_GRACE: Duration = Duration::from_secs(2);

type Reply = std::result::Result<Vec<f64>, String>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, Sender<Reply>>,
    /// Set once the child's stdout closes; new requests fail immediately.
    closed: Option<String>,
}

/// Client for a predictor running as a child process that speaks the
/// protocol as newline-delimited JSON on its stdin/stdout.
///
/// Requests may be in flight concurrently; a reader thread routes each
/// response to its caller by request id.
pub struct StdioPredictor {
    info: ModelInfo,
    child: Mutex<Child>,
    /// Taken on drop so the adapter sees end of input.
    stdin: Mutex<Option<ChildStdin>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicU64,
    options: RemoteOptions,
    reader: Option<JoinHandle<()>>,
}

impl StdioPredictor {
    /// Spawns `command` through `sh -c` and performs the metadata handshake.
    pub fn spawn(command: &str, options: RemoteOptions) -> Result<Self> {
        let unreachable = |message: String| Error::Transport {
            attempts: 1,
            message,
        };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unreachable(format!("cannot spawn {command:?}: {e}")))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));

        let handshake = serde_json::to_string(&Request::Metadata).expect("request serializes");
        writeln!(stdin, "{handshake}")
            .and_then(|_| stdin.flush())
            .map_err(|e| unreachable(format!("handshake write failed: {e}")))?;
        let mut line = String::new();
        let n = stdout
            .read_line(&mut line)
            .map_err(|e| unreachable(format!("handshake read failed: {e}")))?;
        if n == 0 {
            let _ = child.kill();
            let _ = child.wait();
            return Err(unreachable(format!(
                "{command:?} closed stdout before answering metadata"
            )));
        }
        let info: ModelInfo = serde_json::from_str(line.trim())
            .map_err(|e| unreachable(format!("bad metadata response {:?}: {e}", line.trim())))?;

        let pending = Arc::new(Mutex::new(Pending::default()));
        let reader = {
            let pending = Arc::clone(&pending);
            std::thread::spawn(move || read_responses(stdout, pending))
        };

        Ok(Self {
            info,
            child: Mutex::new(child),
            stdin: Mutex::new(Some(stdin)),
            pending,
            next_id: AtomicU64::new(1),
            options,
            reader: Some(reader),
        })
    }

    fn send(&self, x: &ImageTensor) -> Result<(u64, Receiver<Reply>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut pending = self.pending.lock().unwrap();
            if let Some(reason) = &pending.closed {
                return Err(Error::Transport {
                    attempts: 1,
                    message: reason.clone(),
                });
            }
            pending.waiters.insert(id, tx);
        }
        let line = serde_json::to_string(&predict_request(id, x)).expect("request serializes");
        let mut guard = self.stdin.lock().unwrap();
        let Some(stdin) = guard.as_mut() else {
            self.pending.lock().unwrap().waiters.remove(&id);
            return Err(Error::Transport {
                attempts: 1,
                message: "predictor input already closed".into(),
            });
        };
        if let Err(e) = writeln!(stdin, "{line}").and_then(|_| stdin.flush()) {
            self.pending.lock().unwrap().waiters.remove(&id);
            return Err(Error::Transport {
                attempts: 1,
                message: format!("write to predictor failed: {e}"),
            });
        }
        Ok((id, rx))
    }

    fn wait(&self, id: u64, rx: Receiver<Reply>) -> Result<PredictionRecord> {
        match rx.recv_timeout(self.options.timeout) {
            Ok(Ok(probs)) => PredictionRecord::from_probs(probs),
            Ok(Err(message)) => Err(Error::Remote { id, message }),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().waiters.remove(&id);
                Err(Error::Transport {
                    attempts: 1,
                    message: format!("request {id} timed out after {:?}", self.options.timeout),
                })
            }
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport {
                attempts: 1,
                message: "predictor process exited".into(),
            }),
        }
    }
}

fn read_responses(stdout: BufReader<ChildStdout>, pending: Arc<Mutex<Pending>>) {
    for line in stdout.lines() {
        let Ok(line) = line else { break };
        let Ok(resp) = serde_json::from_str::<Response>(&line) else {
            log::warn!("ignoring unparsable predictor output: {line:?}");
            continue;
        };
        let Some(id) = resp.id else {
            log::warn!("ignoring predictor response without id: {line:?}");
            continue;
        };
        let waiter = pending.lock().unwrap().waiters.remove(&id);
        let Some(tx) = waiter else {
            log::warn!("ignoring response for unknown request id {id}");
            continue;
        };
        let reply = match (resp.probs, resp.error) {
            (_, Some(err)) => Err(err),
            (Some(probs), None) => Ok(probs),
            (None, None) => Err("response carries neither probs nor error".to_string()),
        };
        let _ = tx.send(reply);
    }
    let mut pending = pending.lock().unwrap();
    pending.closed = Some("predictor process closed its output".into());
    // Dropping the senders wakes every waiter with Disconnected.
    pending.waiters.clear();
}

impl Predictor for StdioPredictor {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        check_input_shape(&self.info, x)?;
        let (id, rx) = self.send(x)?;
        self.wait(id, rx)
    }

    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        for x in xs {
            check_input_shape(&self.info, x)?;
        }
        let mut out = Vec::with_capacity(xs.len());
        let mut failed = Vec::new();
        let window = self.options.max_in_flight.max(1);
        for (chunk_idx, chunk) in xs.chunks(window).enumerate() {
            let mut sent = Vec::with_capacity(chunk.len());
            for x in chunk {
                sent.push(self.send(x)?);
            }
            for (offset, (id, rx)) in sent.into_iter().enumerate() {
                match self.wait(id, rx) {
                    Ok(r) => out.push(r),
                    Err(e) if e.is_transport() => return Err(e),
                    Err(e) => failed.push((chunk_idx * window + offset, e.to_string())),
                }
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(Error::Batch { failed })
        }
    }
}

impl Drop for StdioPredictor {
    fn drop(&mut self) {
        // Closing stdin lets the adapter, and anything the shell spawned for
        // it, exit on its own.
        if let Ok(mut stdin) = self.stdin.lock() {
            stdin.take();
        }
        if let Ok(mut child) = self.child.lock() {
            let deadline = Instant::now() + EXIT_GRACE;
            while matches!(child.try_wait(), Ok(None)) && Instant::now() < deadline {
                std::thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
        // The reader ends when the last holder of the pipe exits; it owns
        // nothing that needs joining.
        self.reader.take();
    }
}
