//! Executes synthesized endpoint implementations against the simulator:
//! request dispatch with REST semantics, suite execution with scoring,
//! JUnit-style report emission, an embedded HTTP server, and a one-shot
//! corpus-to-report evaluation.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coder::{synthesize_bundle, CoderError, EndpointImpl};
use crate::corpus::{generate, CorpusConfig, CorpusError};
use crate::model::SpecBundle;
use crate::oracle::{OracleBackend, Prompts};
use crate::retrieval::{
    build_index, query, signal_doc, state_query_text, RetrievalConfig, RetrievalError,
};
use crate::sim::{SimError, VehicleSim};
use crate::tester::{emit_suite, Method, TestCase, TestSuite, TesterError};

/// How many ticks a PUT waits for its confirm-via status signal to reflect
/// the written value before answering 409.
pub const CONFIRM_TIMEOUT_TICKS: u64 = 10;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(
        "suite fingerprint {suite} does not match bundle fingerprint {bundle}; \
         pass force to run anyway"
    )]
    FingerprintMismatch { suite: String, bundle: String },
    #[error("duplicate implementation for property '{0}'")]
    DuplicateImpl(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Tester(#[from] TesterError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("serve failed: {0}")]
    Serve(String),
    #[error("report document rejected: {0}")]
    Format(String),
}

/// Protocol-level reply from dispatch. Errors inside a synthesized impl come
/// back as 5xx responses, never as panics or Rust errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Option<Value>,
}

impl Response {
    fn of(status: u16, body: Value) -> Response {
        Response {
            status,
            body: Some(body),
        }
    }

    fn error(status: u16, reason: String) -> Response {
        Response::of(status, json!({ "error": reason }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum CaseOutcome {
    Pass,
    Fail { observed: String, expected: String },
    Error { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub property_name: String,
    #[serde(flatten)]
    pub outcome: CaseOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTotals {
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

/// Scored result of one suite run. Deterministic given deterministic inputs;
/// deliberately carries no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub suite_id: String,
    pub cases: Vec<CaseResult>,
    pub totals: RunTotals,
    pub pass_rate: f64,
    pub per_property: BTreeMap<String, RunTotals>,
}

impl RunReport {
    fn assemble(suite_id: String, cases: Vec<CaseResult>) -> RunReport {
        let mut totals = RunTotals::default();
        let mut per_property: BTreeMap<String, RunTotals> = BTreeMap::new();
        for case in &cases {
            let bucket = per_property.entry(case.property_name.clone()).or_default();
            for slot in [&mut totals, bucket] {
                slot.cases += 1;
                match &case.outcome {
                    CaseOutcome::Pass => slot.passed += 1,
                    CaseOutcome::Fail { .. } => slot.failed += 1,
                    CaseOutcome::Error { .. } => slot.errored += 1,
                }
            }
        }
        let pass_rate = if totals.cases == 0 {
            0.0
        } else {
            totals.passed as f64 / totals.cases as f64
        };
        RunReport {
            suite_id,
            cases,
            totals,
            pass_rate,
            per_property,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        text
    }

    /// Parses and cross-checks a report document: totals, pass_rate, and the
    /// per-property roll-up must all agree with the case list.
    pub fn from_json(text: &str) -> Result<RunReport, RunnerError> {
        let report: RunReport =
            serde_json::from_str(text).map_err(|e| RunnerError::Format(e.to_string()))?;
        let recomputed = RunReport::assemble(report.suite_id.clone(), report.cases.clone());
        if recomputed != report {
            return Err(RunnerError::Format(
                "totals, pass_rate, or roll-up do not match the case list".to_string(),
            ));
        }
        Ok(report)
    }

    /// JUnit-style XML for CI ingestion. No timestamps, stable ordering.
    pub fn junit_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str(&format!(
            "<testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" errors=\"{}\">\n",
            xml_escape(&self.suite_id),
            self.totals.cases,
            self.totals.failed,
            self.totals.errored
        ));
        for case in &self.cases {
            let name = xml_escape(&case.case_id);
            let class = xml_escape(&case.property_name);
            match &case.outcome {
                CaseOutcome::Pass => {
                    out.push_str(&format!(
                        "  <testcase name=\"{name}\" classname=\"{class}\"/>\n"
                    ));
                }
                CaseOutcome::Fail { observed, expected } => {
                    out.push_str(&format!(
                        "  <testcase name=\"{name}\" classname=\"{class}\">\n    \
                         <failure message=\"expected {}\">observed {}</failure>\n  \
                         </testcase>\n",
                        xml_escape(expected),
                        xml_escape(observed)
                    ));
                }
                CaseOutcome::Error { reason } => {
                    out.push_str(&format!(
                        "  <testcase name=\"{name}\" classname=\"{class}\">\n    \
                         <error message=\"{}\"/>\n  </testcase>\n",
                        xml_escape(reason)
                    ));
                }
            }
        }
        out.push_str("</testsuite>\n");
        out
    }
}

fn xml_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            other => out.push(other),
        }
    }
    out
}

fn body_with(property: &str, value: Value) -> Value {
    let mut map = serde_json::Map::new();
    map.insert(property.to_string(), value);
    Value::Object(map)
}

/// Serves one request against one endpoint implementation. GET reads and
/// decodes the status signal; PUT encodes, writes the request signal, then
/// polls the confirm-via status signal under the sim's tick policy.
pub fn dispatch(
    endpoint: &EndpointImpl,
    sim: &mut VehicleSim,
    method: &str,
    path: &str,
    body: Option<&Value>,
) -> Response {
    if path != endpoint.endpoint_path {
        return Response::error(404, format!("no endpoint at '{path}'"));
    }
    match method {
        "GET" => get_response(endpoint, sim),
        "PUT" => put_response(endpoint, sim, body),
        other => Response::error(405, format!("method {other} is not supported")),
    }
}

fn get_response(endpoint: &EndpointImpl, sim: &VehicleSim) -> Response {
    let raw = match sim.read_signal(&endpoint.get.signal_name) {
        Ok(raw) => raw,
        Err(e) => return Response::error(500, e.to_string()),
    };
    match endpoint.get.codec.decode(raw, endpoint.value_kind) {
        Some(value) => Response::of(200, body_with(&endpoint.property_name, value)),
        None => Response::error(500, format!("raw code {raw} has no decoding")),
    }
}

fn put_response(endpoint: &EndpointImpl, sim: &mut VehicleSim, body: Option<&Value>) -> Response {
    let Some(put) = &endpoint.put else {
        return Response::error(405, format!("'{}' is read-only", endpoint.property_name));
    };
    let Some(value) = body.and_then(|b| b.get(&endpoint.property_name)) else {
        return Response::error(
            400,
            format!("body must carry '{}'", endpoint.property_name),
        );
    };
    let Some(raw) = put.request.codec.encode(value) else {
        return Response::error(400, format!("value {value} cannot be mapped onto the bus"));
    };
    if let Err(e) = sim.write_signal(&put.request.signal_name, raw) {
        return Response::error(500, e.to_string());
    }
    // A rejected write never confirms and falls through to the timeout.
    for waited in 0..=CONFIRM_TIMEOUT_TICKS {
        match sim.read_signal(&put.confirm_via) {
            Ok(read) if read == raw => {
                return Response {
                    status: 204,
                    body: None,
                }
            }
            Ok(_) if waited < CONFIRM_TIMEOUT_TICKS => sim.tick(),
            Ok(_) => {}
            Err(e) => return Response::error(500, e.to_string()),
        }
    }
    Response::error(
        409,
        format!("write not confirmed within {CONFIRM_TIMEOUT_TICKS} ticks"),
    )
}

/// Runs every case of a suite, each on a fresh wired sim. Implementations
/// are executed as-is (no structural validation here) so that a defective
/// impl shows up as failing cases rather than a refused run.
pub fn run_suite(
    suite: &TestSuite,
    impls: &[EndpointImpl],
    bundle: &SpecBundle,
    force: bool,
) -> Result<RunReport, RunnerError> {
    suite.validate()?;
    let bundle_fingerprint = bundle.fingerprint();
    if suite.fingerprint != bundle_fingerprint && !force {
        return Err(RunnerError::FingerprintMismatch {
            suite: suite.fingerprint.clone(),
            bundle: bundle_fingerprint,
        });
    }
    let mut by_property: BTreeMap<&str, &EndpointImpl> = BTreeMap::new();
    for endpoint in impls {
        if by_property
            .insert(endpoint.property_name.as_str(), endpoint)
            .is_some()
        {
            return Err(RunnerError::DuplicateImpl(endpoint.property_name.clone()));
        }
    }
    let mut cases = Vec::with_capacity(suite.cases.len());
    for case in &suite.cases {
        let outcome = match by_property.get(case.property_name.as_str()) {
            None => CaseOutcome::Error {
                reason: format!("no implementation for property '{}'", case.property_name),
            },
            Some(endpoint) => run_case(case, endpoint, bundle)?,
        };
        cases.push(CaseResult {
            case_id: case.id.clone(),
            property_name: case.property_name.clone(),
            outcome,
        });
    }
    Ok(RunReport::assemble(suite.suite_id.clone(), cases))
}

fn run_case(
    case: &TestCase,
    endpoint: &EndpointImpl,
    bundle: &SpecBundle,
) -> Result<CaseOutcome, RunnerError> {
    let mut sim = VehicleSim::wire(bundle)?;
    match case.method {
        Method::Put => {
            let (Some(input), Some(expected)) = (&case.input_value, &case.expected_state) else {
                return Ok(CaseOutcome::Error {
                    reason: "put case lacks input value or expected state".to_string(),
                });
            };
            let body = body_with(
                &case.property_name,
                serde_json::to_value(input).expect("test values serialize"),
            );
            let response = dispatch(endpoint, &mut sim, "PUT", &case.endpoint_path, Some(&body));
            if response.status != 204 {
                return Ok(CaseOutcome::Fail {
                    observed: render_response(&response),
                    expected: "HTTP 204".to_string(),
                });
            }
            let held = match sim.state_code(&expected.state_name) {
                Ok(code) => code,
                Err(e) => return Ok(CaseOutcome::Error {
                    reason: e.to_string(),
                }),
            };
            if held != expected.expected_code {
                return Ok(CaseOutcome::Fail {
                    observed: format!("{}={held}", expected.state_name),
                    expected: format!("{}={}", expected.state_name, expected.expected_code),
                });
            }
            Ok(CaseOutcome::Pass)
        }
        Method::Get => {
            let (Some(preset), Some(expected)) = (&case.preset_state, &case.expected_value) else {
                return Ok(CaseOutcome::Error {
                    reason: "get case lacks preset state or expected value".to_string(),
                });
            };
            if let Err(e) = sim.set_state(&preset.state_name, preset.code) {
                return Ok(CaseOutcome::Error {
                    reason: e.to_string(),
                });
            }
            let response = dispatch(endpoint, &mut sim, "GET", &case.endpoint_path, None);
            let want = serde_json::to_value(expected).expect("test values serialize");
            if response.status != 200 {
                return Ok(CaseOutcome::Fail {
                    observed: render_response(&response),
                    expected: format!("HTTP 200 with {}={want}", case.property_name),
                });
            }
            let got = response.body.as_ref().and_then(|b| b.get(&case.property_name));
            if got != Some(&want) {
                return Ok(CaseOutcome::Fail {
                    observed: format!(
                        "{}={}",
                        case.property_name,
                        got.map_or("absent".to_string(), Value::to_string)
                    ),
                    expected: format!("{}={want}", case.property_name),
                });
            }
            Ok(CaseOutcome::Pass)
        }
    }
}

fn render_response(response: &Response) -> String {
    match &response.body {
        Some(body) => format!("HTTP {} {body}", response.status),
        None => format!("HTTP {}", response.status),
    }
}

/// Running HTTP service. Stops on `stop()` or drop.
#[derive(Debug)]
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Exposes the endpoints over HTTP against one shared sim: a stateful demo
/// surface, unlike suite runs which isolate each case. Returns once the
/// socket is bound; the request loop runs on a background thread.
pub fn serve(
    impls: &[EndpointImpl],
    bundle: &SpecBundle,
    addr: &str,
) -> Result<ServeHandle, RunnerError> {
    for endpoint in impls {
        endpoint.validate()?;
    }
    let sim = VehicleSim::wire(bundle)?;
    let server =
        tiny_http::Server::http(addr).map_err(|e| RunnerError::Serve(e.to_string()))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| RunnerError::Serve("server bound to a non-IP address".to_string()))?;
    let impls = impls.to_vec();
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = std::thread::spawn(move || {
        let sim = Mutex::new(sim);
        while !flag.load(Ordering::SeqCst) {
            match server.recv_timeout(Duration::from_millis(50)) {
                Ok(Some(request)) => handle_request(request, &impls, &sim),
                Ok(None) => continue,
                Err(_) => break,
            }
        }
    });
    Ok(ServeHandle {
        addr: bound,
        stop,
        thread: Some(thread),
    })
}

fn handle_request(
    mut request: tiny_http::Request,
    impls: &[EndpointImpl],
    sim: &Mutex<VehicleSim>,
) {
    let method = request.method().to_string().to_uppercase();
    let path = request.url().split('?').next().unwrap_or("").to_string();
    let mut body_text = String::new();
    if request.as_reader().read_to_string(&mut body_text).is_err() {
        respond(request, Response::error(400, "unreadable body".to_string()));
        return;
    }
    let body = if body_text.trim().is_empty() {
        None
    } else {
        match serde_json::from_str::<Value>(&body_text) {
            Ok(value) => Some(value),
            Err(_) => {
                respond(
                    request,
                    Response::error(400, "request body is not valid JSON".to_string()),
                );
                return;
            }
        }
    };
    let Some(endpoint) = impls.iter().find(|i| i.endpoint_path == path) else {
        respond(
            request,
            Response::error(404, format!("no endpoint at '{path}'")),
        );
        return;
    };
    let response = {
        let mut sim = sim.lock().expect("sim lock");
        dispatch(endpoint, &mut sim, &method, &path, body.as_ref())
    };
    respond(request, response);
}

fn respond(request: tiny_http::Request, response: Response) {
    // A send failure means the client hung up; nothing useful to do.
    let _ = match response.body {
        Some(body) => {
            let header = tiny_http::Header::from_bytes(
                &b"Content-Type"[..],
                &b"application/json"[..],
            )
            .expect("static header");
            request.respond(
                tiny_http::Response::from_string(body.to_string())
                    .with_status_code(response.status)
                    .with_header(header),
            )
        }
        None => request.respond(tiny_http::Response::empty(response.status)),
    };
}

/// Fraction of ground-truth signals (status, plus request where present)
/// that appear in the top-k retrieval slate of their state's query.
pub fn retrieval_recall_at_k(bundle: &SpecBundle, k: usize) -> Result<f64, RunnerError> {
    let truth = bundle
        .ground_truth
        .as_ref()
        .ok_or(RunnerError::Sim(SimError::NoGroundTruth))?;
    let docs: Vec<_> = bundle.signals.iter().map(signal_doc).collect();
    let index = build_index(&docs)?;
    let config = RetrievalConfig { k, min_score: 0.0 };
    let mut wanted = 0usize;
    let mut hits = 0usize;
    for entry in truth.values() {
        let state = bundle.state(&entry.state).ok_or_else(|| {
            RunnerError::Format(format!("ground truth names unknown state '{}'", entry.state))
        })?;
        let results = query(&index, &state_query_text(state), &config);
        let slate: Vec<&str> = results.iter().map(|(id, _)| id.as_str()).collect();
        for signal in std::iter::once(entry.status.as_str()).chain(entry.request.as_deref()) {
            wanted += 1;
            if slate.contains(&signal) {
                hits += 1;
            }
        }
    }
    Ok(if wanted == 0 {
        1.0
    } else {
        hits as f64 / wanted as f64
    })
}

/// One-shot pipeline summary: corpus, synthesis, suite, run, recall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub fingerprint: String,
    pub properties: usize,
    pub synthesized: usize,
    pub recall_at_k: f64,
    pub pass_rate: f64,
    pub totals: RunTotals,
}

/// Generates a corpus, synthesizes impls, generates a suite, runs it, and
/// measures retrieval recall, all with the given oracle backend.
pub fn evaluate(
    config: &CorpusConfig,
    k: usize,
    pairs_per_property: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
) -> Result<EvalSummary, RunnerError> {
    let bundle = generate(config)?;
    let output = synthesize_bundle(&bundle, k, backend, prompts)?;
    let build = emit_suite(&bundle, pairs_per_property, backend, prompts);
    let report = run_suite(&build.suite, &output.impls, &bundle, false)?;
    let recall = retrieval_recall_at_k(&bundle, k)?;
    Ok(EvalSummary {
        fingerprint: bundle.fingerprint(),
        properties: bundle.properties.len(),
        synthesized: output.report.totals.synthesized,
        recall_at_k: recall,
        pass_rate: report.pass_rate,
        totals: report.totals,
    })
}
