//! Serves any [`Predictor`] over the prediction protocol.
//!
//! Used by the CLI's `serve` command and as the in-process endpoint that the
//! remote clients are tested against.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::Value;

use super::protocol::{decode_image, Request, Response};
use super::Predictor;
use crate::error::{Error, Result};

/// Answers one protocol message. Malformed input yields an error response,
/// never a panic.
pub fn handle_message(predictor: &dyn Predictor, message: &str) -> String {
    let value: Value = match serde_json::from_str(message) {
        Ok(v) => v,
        Err(e) => return to_json(&Response::error(None, format!("malformed JSON: {e}"))),
    };
    let id = value.get("id").and_then(Value::as_u64);
    match serde_json::from_value::<Request>(value) {
        Ok(Request::Metadata) => {
            serde_json::to_string(predictor.info()).expect("metadata serializes")
        }
        Ok(Request::Predict {
            id,
            shape,
            data_b64,
        }) => {
            let response = decode_image(&shape, &data_b64)
                .and_then(|x| predictor.predict(&x))
                .map(|r| Response::probs(id, r.probs))
                .unwrap_or_else(|e| Response::error(Some(id), e.to_string()));
            to_json(&response)
        }
        Err(e) => to_json(&Response::error(id, format!("bad request: {e}"))),
    }
}

fn to_json(r: &Response) -> String {
    serde_json::to_string(r).expect("response serializes")
}

/// Newline-delimited JSON loop; returns when `input` reaches EOF.
pub fn serve_stdio(
    predictor: &dyn Predictor,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle_message(predictor, &line);
        writeln!(output, "{reply}").map_err(|e| Error::io("<stdout>", e))?;
        output.flush().map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

/// HTTP endpoint accepting protocol messages as `POST` bodies on any path.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl HttpServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving in the
    /// background. Each request is handled on its own thread.
    pub fn spawn(predictor: Arc<dyn Predictor>, addr: &str) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Transport {
            attempts: 1,
            message: format!("cannot bind {addr}: {e}"),
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Parameter("server is not bound to an IP address".into()))?;
        let server = Arc::new(server);
        let listener = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for mut request in listener.incoming_requests() {
                let predictor = Arc::clone(&predictor);
                std::thread::spawn(move || {
                    let mut body = String::new();
                    let reply = match request.as_reader().read_to_string(&mut body) {
                        Ok(_) => handle_message(predictor.as_ref(), &body),
                        Err(e) => to_json(&Response::error(None, format!("unreadable body: {e}"))),
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                        .expect("static header is valid");
                    let _ = request
                        .respond(tiny_http::Response::from_string(reply).with_header(header));
                });
            }
        });
        Ok(Self {
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::protocol::predict_request;
    use crate::predictor::EchoPredictor;
    use crate::tensor_io::ImageTensor;

    fn echo() -> EchoPredictor {
        EchoPredictor::new([1, 2, 1], vec![0.125, 0.875]).unwrap()
    }

    #[test]
    fn metadata_and_predict() {
        let p = echo();
        let meta: Value =
            serde_json::from_str(&handle_message(&p, r#"{"op":"metadata"}"#)).unwrap();
        assert_eq!(meta["num_classes"], 2);
        assert_eq!(meta["input_shape"], serde_json::json!([1, 2, 1]));

        let x = ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let req = serde_json::to_string(&predict_request(9, &x)).unwrap();
        let resp: Response = serde_json::from_str(&handle_message(&p, &req)).unwrap();
        assert_eq!(resp, Response::probs(9, vec![0.125, 0.875]));
    }

    #[test]
    fn malformed_requests_get_error_responses() {
        let p = echo();
        let resp: Response = serde_json::from_str(&handle_message(&p, "{nope")).unwrap();
        assert!(resp.error.is_some());

        let resp: Response = serde_json::from_str(&handle_message(
            &p,
            r#"{"id":5,"op":"predict","shape":[2,2,1],"data_b64":"AAAAAA=="}"#,
        ))
        .unwrap();
        assert_eq!(resp.id, Some(5));
        assert!(resp.error.is_some());

        let resp: Response =
            serde_json::from_str(&handle_message(&p, r#"{"id":6,"op":"train"}"#)).unwrap();
        assert_eq!(resp.id, Some(6));
        assert!(resp.error.unwrap().contains("bad request"));
    }

    #[test]
    fn stdio_loop_answers_each_line() {
        let p = echo();
        let input = b"{\"op\":\"metadata\"}\n\n{\"id\":1,\"op\":\"predict\",\"shape\":[1,2,1],\"data_b64\":\"AAAAAAAAAAA=\"}\n";
        let mut out = Vec::new();
        serve_stdio(&p, &input[..], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("\"probs\":[0.125,0.875]"));
    }
}
