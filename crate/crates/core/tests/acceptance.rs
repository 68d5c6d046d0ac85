//! End-to-end acceptance checks for the full pipeline: corpus generation,
//! retrieval, synthesis, test generation, and execution. Each test prints
//! one pass/fail line so a suite run doubles as a scoreboard.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use forge_core::coder::{synthesize_bundle, Codec, EndpointImpl, SynthesisOutput, ValueKind};
use forge_core::corpus::{generate, CorpusConfig, SplitMix64};
use forge_core::model::{SignalDirection, SpecBundle};
use forge_core::oracle::{
    fuzzer_signature, invoke, mapper_signature, synthesizer_signature, OracleBackend, OracleError,
    Prompts, RemoteConfig,
};
use forge_core::runner::{retrieval_recall_at_k, run_suite, RunReport};
use forge_core::sim::{SimError, VehicleSim, WriteAck};
use forge_core::tester::{emit_suite, Method, SuiteBuild, TestValue};

fn check(number: u8, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("acceptance {number} {name}: PASS"),
        Err(reason) => println!("acceptance {number} {name}: FAIL ({reason})"),
    }
    if let Err(reason) = result {
        panic!("acceptance {number} {name}: {reason}");
    }
}

fn corpus_config(seed: u64, n_endpoints: usize, noise_level: f64) -> CorpusConfig {
    CorpusConfig {
        seed,
        n_endpoints,
        distractors_per_endpoint: 3,
        noise_level,
        ..CorpusConfig::default()
    }
}

fn pipeline(bundle: &SpecBundle) -> Result<(SynthesisOutput, SuiteBuild, RunReport), String> {
    let backend = OracleBackend::deterministic();
    let prompts = Prompts::default();
    let output =
        synthesize_bundle(bundle, 5, &backend, &prompts).map_err(|e| format!("synthesize: {e}"))?;
    let build = emit_suite(bundle, 2, &backend, &prompts);
    let report = run_suite(&build.suite, &output.impls, bundle, false)
        .map_err(|e| format!("run: {e}"))?;
    Ok((output, build, report))
}

fn ensure(condition: bool, message: &str) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message.to_string())
    }
}

#[test]
fn canonical_fixture_fidelity() {
    check(1, "canonical fixture fidelity", (|| {
        let started = Instant::now();
        let bundle = generate(&corpus_config(7, 1, 0.0)).map_err(|e| e.to_string())?;
        let (output, build, report) = pipeline(&bundle)?;

        ensure(output.impls.len() == 1, "expected exactly one impl")?;
        let endpoint = &output.impls[0];
        ensure(endpoint.endpoint_path == "/climate", "endpoint path is not /climate")?;
        ensure(endpoint.property_name == "acMode", "property is not acMode")?;
        ensure(endpoint.state_name == "ACState", "state is not ACState")?;
        ensure(
            endpoint.get.signal_name == "APIACModeStatus",
            "get binding is not APIACModeStatus",
        )?;
        let reference_table = Codec::Table {
            decode_table: BTreeMap::from([
                ("0".to_string(), "OFF".to_string()),
                ("1".to_string(), "STANDARD".to_string()),
                ("2".to_string(), "ECO".to_string()),
            ]),
        };
        ensure(endpoint.get.codec == reference_table, "decode table is wrong")?;
        let put = endpoint.put.as_ref().ok_or("impl lacks a put binding")?;
        ensure(
            put.request.signal_name == "APIACModeRqst",
            "request binding is not APIACModeRqst",
        )?;
        ensure(put.confirm_via == "APIACModeStatus", "confirm-via is wrong")?;
        ensure(put.request.codec == endpoint.get.codec, "put and get codecs differ")?;

        let sends_standard = build.suite.cases.iter().any(|case| {
            case.method == Method::Put
                && case.property_name == "acMode"
                && case.input_value == Some(TestValue::Label("STANDARD".to_string()))
                && case.expected_state.as_ref().is_some_and(|expected| {
                    expected.state_name == "ACState" && expected.expected_code == 1
                })
        });
        ensure(
            sends_standard,
            "suite lacks the case that sends STANDARD and checks ACState=1",
        )?;

        ensure(report.pass_rate == 1.0, "pass rate is not exactly 1.0")?;
        let elapsed = started.elapsed();
        ensure(
            elapsed < Duration::from_secs(5),
            &format!("took {elapsed:?}, budget is 5s"),
        )
    })());
}

#[test]
fn clean_corpus_synthesis() {
    check(2, "clean-corpus synthesis", (|| {
        let started = Instant::now();
        let bundle = generate(&corpus_config(7, 50, 0.0)).map_err(|e| e.to_string())?;
        let (output, _build, report) = pipeline(&bundle)?;

        ensure(
            output.report.totals.failed == 0 && output.impls.len() == 50,
            "not every property synthesized",
        )?;
        let truth = bundle.ground_truth.as_ref().ok_or("corpus lacks ground truth")?;
        for endpoint in &output.impls {
            let entry = truth
                .get(&endpoint.property_name)
                .ok_or_else(|| format!("no ground truth for '{}'", endpoint.property_name))?;
            let request = endpoint
                .put
                .as_ref()
                .map(|put| put.request.signal_name.clone());
            if endpoint.state_name != entry.state
                || endpoint.get.signal_name != entry.status
                || request != entry.request
            {
                return Err(format!(
                    "triple for '{}' diverges from ground truth",
                    endpoint.property_name
                ));
            }
        }
        ensure(report.pass_rate == 1.0, "pass rate is not exactly 1.0")?;
        let elapsed = started.elapsed();
        ensure(
            elapsed < Duration::from_secs(30),
            &format!("took {elapsed:?}, budget is 30s"),
        )
    })());
}

#[test]
fn retrieval_recall() {
    check(3, "retrieval recall", (|| {
        let clean = generate(&corpus_config(7, 50, 0.0)).map_err(|e| e.to_string())?;
        let clean_recall = retrieval_recall_at_k(&clean, 5).map_err(|e| e.to_string())?;
        ensure(
            clean_recall == 1.0,
            &format!("recall@5 on the clean corpus is {clean_recall}, want 1.0"),
        )?;
        let noisy = generate(&corpus_config(7, 50, 0.3)).map_err(|e| e.to_string())?;
        let noisy_recall = retrieval_recall_at_k(&noisy, 5).map_err(|e| e.to_string())?;
        ensure(
            noisy_recall >= 0.8,
            &format!("recall@5 at noise 0.3 is {noisy_recall}, want >= 0.8"),
        )
    })());
}

const LABELS: [&str; 12] = [
    "OFF", "ON", "LOW", "HIGH", "AUTO", "ECO", "STANDARD", "BOOST", "NIGHT", "DAY", "MAX", "MIN",
];

fn random_labels(rng: &mut SplitMix64) -> Vec<String> {
    let count = 1 + rng.below(5);
    let mut picked: Vec<String> = Vec::new();
    while picked.len() < count {
        let label = LABELS[rng.below(LABELS.len())].to_string();
        if !picked.contains(&label) {
            picked.push(label);
        }
    }
    picked
}

fn random_value_map(rng: &mut SplitMix64) -> Value {
    let mut map = serde_json::Map::new();
    for (code, label) in random_labels(rng).into_iter().enumerate() {
        map.insert(label, json!(code));
    }
    Value::Object(map)
}

fn random_mapper_input(rng: &mut SplitMix64) -> Value {
    let kind = ["enum", "number", "boolean"][rng.below(3)];
    let labels = if kind == "enum" { random_labels(rng) } else { Vec::new() };
    let mut candidates = Vec::new();
    for i in 0..rng.below(4) {
        let coded = rng.chance(0.6);
        let scale = [0.01, 0.5, 1.0][rng.below(3)];
        let offset = [-40.0, 0.0, 10.0][rng.below(3)];
        candidates.push(json!({
            "name": format!("State{i}"),
            "shape": if coded { "coded" } else { "scalar" },
            "labels": if coded {
                Value::Array(
                    random_labels(rng)
                        .into_iter()
                        .enumerate()
                        .map(|(code, label)| json!([label, code]))
                        .collect(),
                )
            } else {
                json!([])
            },
            "unit": if coded { "" } else { "kmh" },
            "scale": scale,
            "offset": offset,
            "source_text": "generated candidate"
        }));
    }
    json!({
        "property": {
            "name": format!("prop{}", rng.below(100)),
            "kind": kind,
            "labels": labels,
            "unit": if kind == "number" { "kmh" } else { "" },
            "description": "randomized input"
        },
        "candidates": candidates
    })
}

fn random_fuzzer_input(rng: &mut SplitMix64) -> Value {
    let table = rng.chance(0.5);
    let low = rng.below(50) as f64;
    let scale = [0.01, 0.5, 1.0, 2.0][rng.below(4)];
    let offset = [-40.0, 0.0, 10.0][rng.below(3)];
    json!({
        "property_name": format!("prop{}", rng.below(100)),
        "kind": if table { "table" } else { "linear" },
        "value_map": if table { random_value_map(rng) } else { json!({}) },
        "scale": scale,
        "offset": offset,
        "min": low,
        "max": low + rng.below(300) as f64,
        "n_cases": 1 + rng.below(5)
    })
}

fn random_synthesizer_input(rng: &mut SplitMix64) -> Value {
    let table = rng.chance(0.5);
    let mut slate = Vec::new();
    for i in 0..rng.below(5) {
        slate.push(json!({
            "doc_id": format!("Signal{i}"),
            "direction": if rng.chance(0.5) { "status" } else { "request" },
            "score": (rng.below(1000) as f64) / 1000.0
        }));
    }
    let scale = [0.01, 1.0][rng.below(2)];
    let offset = [0.0, 10.0][rng.below(2)];
    json!({
        "property_name": format!("prop{}", rng.below(100)),
        "state_name": "SomeState",
        "access": if rng.chance(0.5) { "read-write" } else { "read-only" },
        "kind": if table { "table" } else { "linear" },
        "value_map": if table { random_value_map(rng) } else { json!({}) },
        "scale": scale,
        "offset": offset,
        "slate": slate
    })
}

/// Minimal chat-completions stub that always answers with a schema-invalid
/// payload, closing each connection so every retry arrives separately.
fn spawn_misbehaving_oracle(answers: usize) -> (SocketAddr, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub listener");
    let addr = listener.local_addr().expect("stub addr");
    let handle = std::thread::spawn(move || {
        for _ in 0..answers {
            let Ok((mut stream, _)) = listener.accept() else { return };
            consume_request(&mut stream);
            let body = json!({
                "choices": [{"message": {"content": "{\"oops\": 1}"}}]
            })
            .to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\n\
                 connection: close\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (addr, handle)
}

fn consume_request(stream: &mut TcpStream) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => return,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if request_complete(&buf) {
                    return;
                }
            }
        }
    }
}

fn request_complete(buf: &[u8]) -> bool {
    let Some(header_end) = buf.windows(4).position(|w| w == b"\r\n\r\n") else {
        return false;
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let body = &buf[header_end + 4..];
    if headers.contains("transfer-encoding: chunked") {
        body.windows(5).any(|w| w == b"0\r\n\r\n")
    } else if let Some(line) = headers.lines().find(|l| l.starts_with("content-length:")) {
        let length: usize = line["content-length:".len()..].trim().parse().unwrap_or(0);
        body.len() >= length
    } else {
        true
    }
}

#[test]
fn oracle_schema_safety() {
    check(4, "oracle schema safety", (|| {
        let backend = OracleBackend::deterministic();
        let prompts = Prompts::default();
        let signatures = [
            mapper_signature(&prompts),
            fuzzer_signature(&prompts),
            synthesizer_signature(&prompts),
        ];
        let mut rng = SplitMix64::new(0xACCE97);
        for i in 0..1000 {
            let pick = i % signatures.len();
            let input = match pick {
                0 => random_mapper_input(&mut rng),
                1 => random_fuzzer_input(&mut rng),
                _ => random_synthesizer_input(&mut rng),
            };
            let signature = &signatures[pick];
            let (value, transcript) = invoke(signature, &input, &backend)
                .map_err(|e| format!("invoke {i} ({}) failed: {e}", signature.name))?;
            signature
                .output_schema
                .validate(&value)
                .map_err(|e| format!("invoke {i} ({}) violated its schema: {e}", signature.name))?;
            ensure(
                transcript.parsed_output.as_ref() == Some(&value),
                "transcript does not carry the parsed output",
            )?;
        }

        let (addr, server) = spawn_misbehaving_oracle(3);
        let mut config = RemoteConfig::new(&format!("http://{addr}/v1/chat/completions"), "stub");
        config.max_retries = 2;
        let remote = OracleBackend::remote(config);
        let signature = mapper_signature(&prompts);
        let input = json!({
            "property": {
                "name": "acMode",
                "kind": "enum",
                "labels": ["OFF"],
                "unit": "",
                "description": "probe"
            },
            "candidates": []
        });
        let error = match invoke(&signature, &input, &remote) {
            Err(error) => error,
            Ok(_) => return Err("misbehaving oracle was accepted".to_string()),
        };
        server.join().map_err(|_| "stub server panicked".to_string())?;
        match error {
            OracleError::Validation { reason, transcript } => {
                ensure(transcript.attempt_count == 3, "expected 3 attempts (1 + 2 retries)")?;
                ensure(
                    transcript.failure_reason.is_some(),
                    "transcript lacks a failure reason",
                )?;
                ensure(
                    reason.contains("schema"),
                    &format!("unexpected rejection reason: {reason}"),
                )
            }
            other => Err(format!("expected a validation error, got: {other}")),
        }
    })());
}

fn table_round_trips(endpoint: &EndpointImpl) -> Result<usize, String> {
    let mut checked = 0;
    let mut codecs = vec![&endpoint.get.codec];
    if let Some(put) = &endpoint.put {
        codecs.push(&put.request.codec);
    }
    for codec in codecs {
        let Codec::Table { decode_table } = codec else { continue };
        for (code_text, label) in decode_table {
            let code: u64 = code_text
                .parse()
                .map_err(|_| format!("non-numeric code '{code_text}'"))?;
            let surface = match endpoint.value_kind {
                ValueKind::Enum => json!(label),
                ValueKind::Boolean => json!(label == "ON"),
                ValueKind::Number => {
                    return Err(format!(
                        "number property '{}' carries a table codec",
                        endpoint.property_name
                    ))
                }
            };
            if codec.encode(&surface) != Some(code) {
                return Err(format!(
                    "encode({label}) != {code} for '{}'",
                    endpoint.property_name
                ));
            }
            if codec.decode(code, endpoint.value_kind).as_ref() != Some(&surface) {
                return Err(format!(
                    "decode({code}) != {label} for '{}'",
                    endpoint.property_name
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[test]
fn inverse_property() {
    check(5, "inverse property", (|| {
        let backend = OracleBackend::deterministic();
        let prompts = Prompts::default();
        let mut checked = 0;
        for config in [corpus_config(7, 1, 0.0), corpus_config(7, 50, 0.0)] {
            let bundle = generate(&config).map_err(|e| e.to_string())?;
            let output = synthesize_bundle(&bundle, 5, &backend, &prompts)
                .map_err(|e| e.to_string())?;
            for endpoint in &output.impls {
                checked += table_round_trips(endpoint)?;
            }
        }
        ensure(checked > 0, "no mapped labels were checked")
    })());
}

#[test]
fn simulator_coherence() {
    check(6, "simulator coherence", (|| {
        let bundle = generate(&corpus_config(11, 20, 0.0)).map_err(|e| e.to_string())?;
        let mut sim = VehicleSim::wire(&bundle).map_err(|e| e.to_string())?;
        let writable: Vec<String> = sim
            .wired_signals()
            .filter(|(_, d)| *d == SignalDirection::Request)
            .map(|(n, _)| n.to_string())
            .collect();
        let readable: Vec<String> = sim
            .wired_signals()
            .filter(|(_, d)| *d == SignalDirection::Status)
            .map(|(n, _)| n.to_string())
            .collect();
        let states: Vec<String> = sim.state_names().map(str::to_string).collect();

        let mut rng = SplitMix64::new(0x51D);
        for step in 0..10_000 {
            let raw = if rng.chance(0.5) {
                rng.below(4) as u64
            } else {
                rng.below(100_000) as u64
            };
            match rng.below(4) {
                0 => {
                    let signal = &writable[rng.below(writable.len())];
                    let before = sim.snapshot();
                    let ack = sim.write_signal(signal, raw).map_err(|e| e.to_string())?;
                    if ack == WriteAck::Rejected && sim.snapshot() != before {
                        return Err(format!("step {step}: rejected write changed state"));
                    }
                }
                1 => {
                    let state = &states[rng.below(states.len())];
                    let before = sim.snapshot();
                    match sim.set_state(state, raw) {
                        Ok(()) => {}
                        Err(SimError::CodeOutOfRange { .. }) => {
                            if sim.snapshot() != before {
                                return Err(format!("step {step}: failed set changed state"));
                            }
                        }
                        Err(other) => return Err(format!("step {step}: {other}")),
                    }
                }
                2 => sim.tick(),
                _ => {
                    let signal = &readable[rng.below(readable.len())];
                    sim.read_signal(signal).map_err(|e| e.to_string())?;
                }
            }
            sim.check_coherence()
                .map_err(|reason| format!("step {step}: {reason}"))?;
        }
        Ok(())
    })());
}

#[test]
fn mutation_sensitivity() {
    check(7, "mutation sensitivity", (|| {
        let bundle = generate(&corpus_config(7, 12, 0.0)).map_err(|e| e.to_string())?;
        let (output, build, baseline) = pipeline(&bundle)?;
        ensure(baseline.pass_rate == 1.0, "baseline run is not green")?;

        #[derive(Clone, Copy)]
        enum Mutation {
            SwapTableEntries(usize),
            SwapSignalRoles(usize),
        }
        let mut eligible = Vec::new();
        for (i, endpoint) in output.impls.iter().enumerate() {
            if let Codec::Table { decode_table } = &endpoint.get.codec {
                if decode_table.len() >= 2 {
                    eligible.push(Mutation::SwapTableEntries(i));
                }
            }
            if endpoint.put.is_some() {
                eligible.push(Mutation::SwapSignalRoles(i));
            }
        }
        ensure(
            eligible.len() >= 10,
            &format!("only {} eligible mutations", eligible.len()),
        )?;
        let mut rng = SplitMix64::new(42);
        rng.shuffle(&mut eligible);

        for (n, mutation) in eligible.into_iter().take(10).enumerate() {
            let mut impls = output.impls.clone();
            let index = match mutation {
                Mutation::SwapTableEntries(i) => i,
                Mutation::SwapSignalRoles(i) => i,
            };
            let endpoint = &mut impls[index];
            let property = endpoint.property_name.clone();
            match mutation {
                Mutation::SwapTableEntries(_) => {
                    let swap = |codec: &mut Codec| {
                        let Codec::Table { decode_table } = codec else { return };
                        let keys: Vec<String> = decode_table.keys().take(2).cloned().collect();
                        let first = decode_table[&keys[0]].clone();
                        let second = decode_table[&keys[1]].clone();
                        decode_table.insert(keys[0].clone(), second);
                        decode_table.insert(keys[1].clone(), first);
                    };
                    swap(&mut endpoint.get.codec);
                    if let Some(put) = &mut endpoint.put {
                        swap(&mut put.request.codec);
                    }
                }
                Mutation::SwapSignalRoles(_) => {
                    let put = endpoint.put.as_mut().expect("eligibility checked");
                    std::mem::swap(
                        &mut endpoint.get.signal_name,
                        &mut put.request.signal_name,
                    );
                }
            }
            let report = run_suite(&build.suite, &impls, &bundle, false)
                .map_err(|e| format!("mutation {n}: {e}"))?;
            let failed = report
                .per_property
                .get(&property)
                .map_or(0, |totals| totals.failed);
            if failed == 0 {
                return Err(format!(
                    "mutation {n} on '{property}' was not caught by any case"
                ));
            }
        }
        Ok(())
    })());
}

#[test]
fn determinism() {
    check(8, "determinism", (|| {
        for config in [corpus_config(7, 1, 0.0), corpus_config(7, 50, 0.0)] {
            let first = generate(&config).map_err(|e| e.to_string())?;
            let second = generate(&config).map_err(|e| e.to_string())?;

            let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
            let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
            first.write_dir(dir_a.path()).map_err(|e| e.to_string())?;
            second.write_dir(dir_b.path()).map_err(|e| e.to_string())?;
            for file in [
                "openapi.json",
                "states.txt",
                "signals.jsonl",
                "ground_truth.json",
            ] {
                let bytes_a = std::fs::read(dir_a.path().join(file)).map_err(|e| e.to_string())?;
                let bytes_b = std::fs::read(dir_b.path().join(file)).map_err(|e| e.to_string())?;
                ensure(
                    bytes_a == bytes_b,
                    &format!("{file} differs between identical runs"),
                )?;
            }

            let (output_a, build_a, report_a) = pipeline(&first)?;
            let (output_b, build_b, report_b) = pipeline(&second)?;
            ensure(
                output_a.to_json() == output_b.to_json(),
                "impls.json differs between identical runs",
            )?;
            ensure(
                build_a.suite.to_json() == build_b.suite.to_json(),
                "suite.json differs between identical runs",
            )?;
            ensure(
                report_a.to_json() == report_b.to_json(),
                "report.json differs between identical runs",
            )?;
        }
        Ok(())
    })());
}
