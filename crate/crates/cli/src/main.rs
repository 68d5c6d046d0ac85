use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use forge_core::coder::{emit_source, synthesize_bundle_with, Outcome, SynthesisOutput};
use forge_core::corpus::{generate, CorpusConfig};
use forge_core::model::{parse_signal_registry, SpecBundle};
use forge_core::oracle::{OracleBackend, OracleTranscript, Prompts, RemoteConfig};
use forge_core::retrieval::{build_index, query, signal_doc, RetrievalConfig};
use forge_core::runner::{evaluate, run_suite, serve};
use forge_core::tester::{emit_suite_with, TestSuite};

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Synthesize, test, and serve REST endpoints over a simulated vehicle bus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    /// Rule-based oracle, fully offline and reproducible
    Det,
    /// Chat-completions endpoint configured via FORGE_LLM_* variables
    Remote,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded spec bundle: OpenAPI document, state catalog,
    /// signal registry, and ground truth
    Corpus {
        /// RNG seed; equal seeds give byte-identical bundles
        #[arg(long)]
        seed: u64,
        /// Number of endpoint triads to generate
        #[arg(long)]
        endpoints: usize,
        /// Decoy signals per endpoint
        #[arg(long, default_value_t = 3)]
        distractors: usize,
        /// Fraction of signal names obfuscated, in [0, 1]
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Directory to write the bundle files into
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank signal definitions against a free-text query
    Retrieve {
        /// Path to a signals.jsonl registry
        #[arg(long)]
        index_from: PathBuf,
        /// Query text
        #[arg(long)]
        query: String,
        /// Number of results
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Synthesize endpoint implementations for every property in a bundle
    Synthesize {
        /// Bundle directory (from `forge corpus`)
        #[arg(long)]
        bundle: PathBuf,
        /// Retrieval slate size per state
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Backend::Det)]
        backend: Backend,
        /// Where to write impls.json
        #[arg(long)]
        out: PathBuf,
        /// Also render one handler stub per impl into this directory
        #[arg(long)]
        emit_source: Option<PathBuf>,
        /// Write oracle transcripts as transcripts.jsonl under this directory
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a regression test suite for a bundle
    GenTests {
        /// Bundle directory (from `forge corpus`)
        #[arg(long)]
        bundle: PathBuf,
        /// Test pairs per property
        #[arg(long, default_value_t = 2)]
        pairs: usize,
        #[arg(long, value_enum, default_value_t = Backend::Det)]
        backend: Backend,
        /// Where to write suite.json
        #[arg(long)]
        out: PathBuf,
        /// Write oracle transcripts as transcripts.jsonl under this directory
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Execute a suite against implementations, each case on a fresh simulator
    Run {
        /// Suite file (from `forge gen-tests`)
        #[arg(long)]
        suite: PathBuf,
        /// Implementations file (from `forge synthesize`)
        #[arg(long)]
        impls: PathBuf,
        /// Bundle directory the suite was generated from
        #[arg(long)]
        bundle: PathBuf,
        /// Where to write the report document
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write a JUnit-style XML report
        #[arg(long)]
        junit: Option<PathBuf>,
        /// Run even if the suite fingerprint does not match the bundle
        #[arg(long)]
        force: bool,
    },
    /// Serve implementations over HTTP against one shared simulator
    Serve {
        /// Implementations file (from `forge synthesize`)
        #[arg(long)]
        impls: PathBuf,
        /// Bundle directory to wire the simulator from
        #[arg(long)]
        bundle: PathBuf,
        /// Listen address, e.g. 127.0.0.1:8080
        #[arg(long)]
        addr: String,
    },
    /// One-shot pipeline: corpus, synthesize, gen-tests, run, recall
    Eval {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        endpoints: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, value_enum, default_value_t = Backend::Det)]
        backend: Backend,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Corpus {
            seed,
            endpoints,
            distractors,
            noise,
            out,
        } => corpus(seed, endpoints, distractors, noise, &out),
        Command::Retrieve {
            index_from,
            query,
            k,
        } => retrieve(&index_from, &query, k),
        Command::Synthesize {
            bundle,
            k,
            backend,
            out,
            emit_source,
            trace,
        } => synthesize(&bundle, k, backend, &out, emit_source.as_deref(), trace.as_deref()),
        Command::GenTests {
            bundle,
            pairs,
            backend,
            out,
            trace,
        } => gen_tests(&bundle, pairs, backend, &out, trace.as_deref()),
        Command::Run {
            suite,
            impls,
            bundle,
            report,
            junit,
            force,
        } => run(&suite, &impls, &bundle, report.as_deref(), junit.as_deref(), force),
        Command::Serve {
            impls,
            bundle,
            addr,
        } => serve_forever(&impls, &bundle, &addr),
        Command::Eval {
            seed,
            endpoints,
            noise,
            backend,
        } => eval(seed, endpoints, noise, backend),
    }
}

fn load_prompts() -> Result<Prompts> {
    match std::env::var_os("FORGE_PROMPTS") {
        Some(path) => Prompts::from_file(Path::new(&path))
            .with_context(|| format!("loading prompts from {}", path.to_string_lossy())),
        None => Ok(Prompts::default()),
    }
}

fn oracle_backend(backend: Backend) -> Result<OracleBackend> {
    match backend {
        Backend::Det => Ok(OracleBackend::deterministic()),
        Backend::Remote => {
            let config = RemoteConfig::from_env().context("configuring the remote backend")?;
            Ok(OracleBackend::remote(config))
        }
    }
}

fn load_bundle(dir: &Path) -> Result<SpecBundle> {
    SpecBundle::load_dir(dir).with_context(|| format!("loading bundle from {}", dir.display()))
}

fn load_impls(path: &Path) -> Result<SynthesisOutput> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SynthesisOutput::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_trace(dir: &Path, transcripts: &[OracleTranscript]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("transcripts.jsonl");
    let mut out = String::new();
    for transcript in transcripts {
        out.push_str(&serde_json::to_string(transcript).expect("transcripts serialize"));
        out.push('\n');
    }
    fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn corpus(seed: u64, endpoints: usize, distractors: usize, noise: f64, out: &Path) -> Result<()> {
    let config = CorpusConfig {
        seed,
        n_endpoints: endpoints,
        distractors_per_endpoint: distractors,
        noise_level: noise,
        ..CorpusConfig::default()
    };
    let bundle = generate(&config).context("generating the corpus")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    bundle
        .write_dir(out)
        .with_context(|| format!("writing bundle files to {}", out.display()))?;
    println!(
        "wrote {} properties, {} states, {} signals to {}",
        bundle.properties.len(),
        bundle.states.len(),
        bundle.signals.len(),
        out.display()
    );
    println!("fingerprint {}", bundle.fingerprint());
    Ok(())
}

fn retrieve(index_from: &Path, query_text: &str, k: usize) -> Result<()> {
    let text = fs::read_to_string(index_from)
        .with_context(|| format!("reading {}", index_from.display()))?;
    let signals = parse_signal_registry(&text)
        .with_context(|| format!("parsing {}", index_from.display()))?;
    let docs: Vec<_> = signals.iter().map(signal_doc).collect();
    let index = build_index(&docs).context("building the index")?;
    let config = RetrievalConfig { k, min_score: 0.0 };
    for (doc_id, score) in query(&index, query_text, &config) {
        println!("{doc_id} {score:.6}");
    }
    Ok(())
}

fn synthesize(
    bundle_dir: &Path,
    k: usize,
    backend: Backend,
    out: &Path,
    emit_dir: Option<&Path>,
    trace: Option<&Path>,
) -> Result<()> {
    let bundle = load_bundle(bundle_dir)?;
    let backend = oracle_backend(backend)?;
    let prompts = load_prompts()?;
    let mut transcripts = Vec::new();
    let output = synthesize_bundle_with(&bundle, k, &backend, &prompts, &mut |t| {
        transcripts.push(t)
    })
    .context("synthesizing")?;
    fs::write(out, output.to_json()).with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = trace {
        let path = write_trace(dir, &transcripts)?;
        eprintln!("trace: {} transcripts in {}", transcripts.len(), path.display());
    }
    for (property, outcome) in &output.report.outcomes {
        if let Outcome::Failed { reason } = outcome {
            eprintln!("{property}: {reason}");
        }
    }
    if let Some(dir) = emit_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for endpoint in &output.impls {
            let path = dir.join(format!("{}.txt", endpoint.property_name));
            fs::write(&path, emit_source(endpoint))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    println!(
        "synthesized {}/{} properties into {}",
        output.report.totals.synthesized,
        output.report.totals.properties,
        out.display()
    );
    Ok(())
}

fn gen_tests(
    bundle_dir: &Path,
    pairs: usize,
    backend: Backend,
    out: &Path,
    trace: Option<&Path>,
) -> Result<()> {
    let bundle = load_bundle(bundle_dir)?;
    let backend = oracle_backend(backend)?;
    let prompts = load_prompts()?;
    let mut transcripts = Vec::new();
    let build = emit_suite_with(&bundle, pairs, &backend, &prompts, &mut |t| {
        transcripts.push(t)
    });
    fs::write(out, build.suite.to_json())
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = trace {
        let path = write_trace(dir, &transcripts)?;
        eprintln!("trace: {} transcripts in {}", transcripts.len(), path.display());
    }
    for failure in &build.failures {
        eprintln!("{}: {}", failure.property_name, failure.reason);
    }
    println!(
        "{} cases for {} properties into {}",
        build.suite.cases.len(),
        bundle.properties.len() - build.failures.len(),
        out.display()
    );
    Ok(())
}

fn run(
    suite_path: &Path,
    impls_path: &Path,
    bundle_dir: &Path,
    report_path: Option<&Path>,
    junit_path: Option<&Path>,
    force: bool,
) -> Result<()> {
    let suite_text = fs::read_to_string(suite_path)
        .with_context(|| format!("reading {}", suite_path.display()))?;
    let suite =
        TestSuite::from_json(&suite_text).with_context(|| format!("parsing {}", suite_path.display()))?;
    let output = load_impls(impls_path)?;
    let bundle = load_bundle(bundle_dir)?;
    let report = run_suite(&suite, &output.impls, &bundle, force).context("running the suite")?;
    if let Some(path) = report_path {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = junit_path {
        fs::write(path, report.junit_xml())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "suite {}: {} cases, {} passed, {} failed, {} errored",
        report.suite_id,
        report.totals.cases,
        report.totals.passed,
        report.totals.failed,
        report.totals.errored
    );
    println!("pass_rate {:.6}", report.pass_rate);
    if report.totals.failed + report.totals.errored > 0 {
        std::io::stdout().flush().ok();
        std::process::exit(1);
    }
    Ok(())
}

fn serve_forever(impls_path: &Path, bundle_dir: &Path, addr: &str) -> Result<()> {
    let output = load_impls(impls_path)?;
    let bundle = load_bundle(bundle_dir)?;
    let handle = serve(&output.impls, &bundle, addr).context("starting the server")?;
    println!(
        "serving {} endpoints on http://{}",
        output.impls.len(),
        handle.addr()
    );
    let (tx, rx) = std::sync::mpsc::channel();
    ctrlc::set_handler(move || {
        tx.send(()).ok();
    })
    .context("installing the shutdown handler")?;
    rx.recv().context("waiting for shutdown")?;
    handle.stop();
    println!("stopped");
    Ok(())
}

fn eval(seed: u64, endpoints: usize, noise: f64, backend: Backend) -> Result<()> {
    let config = CorpusConfig {
        seed,
        n_endpoints: endpoints,
        noise_level: noise,
        ..CorpusConfig::default()
    };
    let backend = oracle_backend(backend)?;
    let prompts = load_prompts()?;
    let summary = evaluate(&config, 5, 2, &backend, &prompts).context("evaluating")?;
    println!("fingerprint {}", summary.fingerprint);
    println!("properties {}", summary.properties);
    println!("synthesized {}", summary.synthesized);
    println!("recall@5 {:.6}", summary.recall_at_k);
    println!("pass_rate {:.6}", summary.pass_rate);
    Ok(())
}
