//! Remote predictors: the stdio client against a Python adapter process and
//! the HTTP client against the in-process server.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use saco_core::attribution::SeededGenerator;
use saco_core::predictor::server::HttpServer;
use saco_core::predictor::{
    EchoPredictor, HttpPredictor, LinearSoftmaxModel, Predictor, PredictorSpec, RemoteOptions,
    StdioPredictor,
};
use saco_core::run::validate_adapter;
use saco_core::{evaluate_sample, Error, ImageTensor, SalienceMap};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/adapter.py")
}

fn python_available() -> bool {
    let ok = Command::new("python3")
        .args(["-c", "import numpy"])
        .status()
        .map(|s| s.success())
        .unwrap_or(false);
    if !ok {
        eprintln!("python3 with numpy not found; skipping");
    }
    ok
}

fn adapter(args: &str) -> String {
    format!("python3 {} {args}", fixture().display())
}

fn quick() -> RemoteOptions {
    RemoteOptions {
        max_in_flight: 8,
        retries: 1,
        retry_backoff: Duration::from_millis(10),
        timeout: Duration::from_secs(20),
    }
}

fn noise(shape: [usize; 3], seed: u64) -> ImageTensor {
    let mut g = SeededGenerator::new(seed);
    let [h, w, c] = shape;
    ImageTensor::new(
        h,
        w,
        c,
        (0..h * w * c).map(|_| g.next_unit() as f32).collect(),
    )
    .unwrap()
}

// Values with no short decimal form; a float32 round trip would change them.
const ECHO: [f64; 3] = [0.1, 0.2, 0.7000000000000001];

#[test]
fn stdio_echo_is_bit_exact() {
    if !python_available() {
        return;
    }
    let probs = ECHO.map(|p| format!("{p:?}")).join(",");
    let p = StdioPredictor::spawn(&adapter(&format!("echo {probs}")), quick()).unwrap();
    assert_eq!(p.info().num_classes, 3);
    assert_eq!(p.info().input_shape, [2, 2, 3]);
    let xs: Vec<ImageTensor> = (0..20).map(|i| noise([2, 2, 3], i)).collect();
    let batch = p.predict_batch(&xs).unwrap();
    assert_eq!(batch.len(), 20);
    for r in &batch {
        assert_eq!(r.probs, ECHO);
        assert_eq!(r.predicted_class, 2);
    }
    assert!(p.predict_batch(&[]).unwrap().is_empty());
}

#[test]
fn http_echo_is_bit_exact() {
    let server = HttpServer::spawn(
        Arc::new(EchoPredictor::new([2, 2, 3], ECHO.to_vec()).unwrap()),
        "127.0.0.1:0",
    )
    .unwrap();
    let p = HttpPredictor::connect(&server.url(), quick()).unwrap();
    assert_eq!(p.info().model_name, "echo");
    let xs: Vec<ImageTensor> = (0..12).map(|i| noise([2, 2, 3], i)).collect();
    for r in p.predict_batch(&xs).unwrap() {
        assert_eq!(r.probs, ECHO);
    }
}

#[test]
fn http_matches_in_process_model() {
    let w: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            (0..27)
                .map(|i| ((i * (c + 2)) as f64 * 0.31).sin())
                .collect()
        })
        .collect();
    let model = LinearSoftmaxModel::new("lin", [3, 3, 3], w, vec![0.0, 0.5, -0.5]).unwrap();
    let server = HttpServer::spawn(Arc::new(model.clone()), "127.0.0.1:0").unwrap();
    let remote = HttpPredictor::connect(&server.url(), quick()).unwrap();
    let x = noise([3, 3, 3], 5);
    let map = SalienceMap::new(3, 3, (0..9).map(|i| ((i * 5) % 9) as f64).collect()).unwrap();
    let local = evaluate_sample(&x, &map, &model, 4).unwrap();
    let over_http = evaluate_sample(&x, &map, &remote, 4).unwrap();
    assert_eq!(local, over_http);
}

#[test]
fn stdio_linear_adapter_agrees_with_builtin() {
    if !python_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let w: Vec<Vec<f64>> = (0..2)
        .map(|c| (0..48).map(|i| ((i + 7 * c) as f64 * 0.77).cos()).collect())
        .collect();
    let model = LinearSoftmaxModel::new("lin", [4, 4, 3], w, vec![0.1, -0.1]).unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let remote =
        StdioPredictor::spawn(&adapter(&format!("linear {}", path.display())), quick()).unwrap();

    let x = noise([4, 4, 3], 9);
    let map = SalienceMap::new(
        4,
        4,
        (0..16).map(|i| ((i * 7) % 16) as f64 / 16.0).collect(),
    )
    .unwrap();
    let local = evaluate_sample(&x, &map, &model, 5).unwrap();
    let piped = evaluate_sample(&x, &map, &remote, 5).unwrap();
    assert_eq!(local.measurements.salience(), piped.measurements.salience());
    for (a, b) in local
        .measurements
        .dpred()
        .iter()
        .zip(piped.measurements.dpred())
    {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!((local.saco.f - piped.saco.f).abs() < 1e-12);
}

#[test]
fn stdio_failures_are_classified() {
    if !python_available() {
        return;
    }
    let x = noise([2, 2, 3], 1);

    let p = StdioPredictor::spawn(&adapter("error"), quick()).unwrap();
    assert!(matches!(p.predict(&x), Err(Error::Remote { .. })));
    match p.predict_batch(&[x.clone(), x.clone(), x.clone()]) {
        Err(Error::Batch { failed }) => {
            assert_eq!(failed.iter().map(|f| f.0).collect::<Vec<_>>(), [0, 1, 2])
        }
        other => panic!("expected batch error, got {other:?}"),
    }

    let p = StdioPredictor::spawn(&adapter("bad-simplex"), quick()).unwrap();
    assert!(matches!(p.predict(&x), Err(Error::Validation(_))));

    let p = StdioPredictor::spawn(&adapter("die-after 2"), quick()).unwrap();
    p.predict(&x).unwrap();
    p.predict(&x).unwrap();
    assert!(p.predict(&x).unwrap_err().is_transport());
    assert!(p.predict(&x).unwrap_err().is_transport());

    let wrong = ImageTensor::filled(3, 2, 3, 0.0).unwrap();
    let p = StdioPredictor::spawn(&adapter("echo 0.5,0.5"), quick()).unwrap();
    assert!(matches!(p.predict(&wrong), Err(Error::Parameter(_))));
}

#[test]
fn unreachable_predictors_are_transport_errors() {
    match StdioPredictor::spawn("exit 0", quick()) {
        Err(e) => assert!(e.is_transport(), "{e}"),
        Ok(_) => panic!("spawned a predictor that exits immediately"),
    }

    // Bind then drop to find a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let opts = RemoteOptions {
        retries: 2,
        ..quick()
    };
    match HttpPredictor::connect(&format!("http://127.0.0.1:{port}/"), opts) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        Err(other) => panic!("expected transport error, got {other}"),
        Ok(_) => panic!("connected to a closed port"),
    }
}

#[test]
fn conformance_suite_over_stdio() {
    if !python_available() {
        return;
    }
    let good: PredictorSpec = format!("stdio:{}", adapter("echo 0.3,0.7"))
        .parse()
        .unwrap();
    let report = validate_adapter(&good, &quick()).unwrap();
    assert!(report.passed(), "{report:?}");

    let bad: PredictorSpec = format!("stdio:{}", adapter("bad-simplex")).parse().unwrap();
    let report = validate_adapter(&bad, &quick()).unwrap();
    assert!(!report.passed());
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    assert!(failed.contains(&"simplex"), "{failed:?}");

    let gone: PredictorSpec = "stdio:exit 0".parse().unwrap();
    assert!(validate_adapter(&gone, &quick())
        .unwrap_err()
        .is_transport());
}
