//! Deterministic generator of synthetic spec bundles. Stands in for a real
//! vehicle API corpus: every generated endpoint gets a property, a governing
//! state, a status signal, optionally a request signal, and a configurable
//! number of distractor signals that never mention any true state.

mod rng;

pub use rng::SplitMix64;

use thiserror::Error;

use crate::model::{
    Access, CodedEntry, GroundTruth, GroundTruthEntry, ModelError, PropertyDef, PropertyKind,
    SignalDef, SignalDirection, SignalEncoding, SpecBundle, StateDef, StateShape,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus config: {0}")]
    Config(String),
    #[error("generated bundle failed validation: {0}")]
    Invalid(#[from] ModelError),
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_endpoints: usize,
    pub distractors_per_endpoint: usize,
    /// Probability that a true signal's description omits the explicit state
    /// name, leaving only token overlap for retrieval to work with.
    pub noise_level: f64,
    /// Fraction of enum properties; the rest are scalars.
    pub enum_ratio: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            n_endpoints: 10,
            distractors_per_endpoint: 3,
            noise_level: 0.0,
            enum_ratio: 0.7,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_endpoints == 0 {
            return Err(CorpusError::Config("n_endpoints must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(CorpusError::Config(format!(
                "noise_level {} outside [0, 1]",
                self.noise_level
            )));
        }
        if !(0.0..=1.0).contains(&self.enum_ratio) {
            return Err(CorpusError::Config(format!(
                "enum_ratio {} outside [0, 1]",
                self.enum_ratio
            )));
        }
        Ok(())
    }
}

/// Fraction of non-canonical endpoints generated without a put method.
const READ_ONLY_RATIO: f64 = 0.25;

const ADJECTIVES: [&str; 16] = [
    "cabin", "front", "rear", "left", "right", "roof", "trunk", "hood", "driver", "passenger",
    "battery", "charge", "park", "mirror", "seat", "steering",
];

const NOUNS: [&str; 16] = [
    "light", "door", "lock", "wiper", "heater", "fan", "vent", "window", "blind", "pump", "motor",
    "sensor", "valve", "brake", "horn", "defroster",
];

const ENUM_LABELS: [&str; 12] = [
    "OFF", "ON", "LOW", "MEDIUM", "HIGH", "AUTO", "ECO", "STANDARD", "MAX", "MIN", "SPORT",
    "COMFORT",
];

/// (unit, scale, offset) triples for scalar states. Raw width is 16 bits, so
/// the physical range is offset ..= offset + scale * 65535.
const SCALAR_UNITS: [(&str, f64, f64); 6] = [
    ("degC", 0.5, -40.0),
    ("kmh", 0.1, 0.0),
    ("pct", 0.01, 0.0),
    ("rpm", 1.0, 0.0),
    ("volt", 0.01, 0.0),
    ("bar", 0.05, 0.0),
];

const DISTRACTOR_SUFFIXES: [&str; 4] = ["Cnt", "Dbg", "Raw", "Cal"];
const DISTRACTOR_WORDS: [&str; 4] = ["counter", "checksum", "heartbeat", "trace"];

const SCALAR_WIDTH: u8 = 16;
const SCALAR_MAX_RAW: f64 = 65535.0;

/// Hands out unique (adjective, noun) stems; once the cross product is
/// exhausted a round number is appended to the noun.
struct StemIter {
    pool: Vec<(String, String)>,
    next: usize,
}

impl StemIter {
    fn new(rng: &mut SplitMix64) -> Self {
        let mut pool = Vec::with_capacity(ADJECTIVES.len() * NOUNS.len());
        for adj in ADJECTIVES {
            for noun in NOUNS {
                pool.push((adj.to_string(), noun.to_string()));
            }
        }
        rng.shuffle(&mut pool);
        StemIter { pool, next: 0 }
    }

    fn next_stem(&mut self) -> (String, String) {
        let i = self.next;
        self.next += 1;
        let (adj, noun) = &self.pool[i % self.pool.len()];
        let round = i / self.pool.len();
        if round == 0 {
            (adj.clone(), noun.clone())
        } else {
            (adj.clone(), format!("{noun}{}", round + 1))
        }
    }
}

fn pascal(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decl_text(name: &str, shape: &StateShape) -> String {
    let probe = StateDef {
        name: name.to_string(),
        shape: shape.clone(),
        source_text: String::new(),
    };
    crate::model::serialize_states(std::slice::from_ref(&probe))
        .trim_end()
        .to_string()
}

struct EndpointPlan {
    property: PropertyDef,
    state: StateDef,
    status: SignalDef,
    request: Option<SignalDef>,
}

pub fn generate(config: &CorpusConfig) -> Result<SpecBundle, CorpusError> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut stems = StemIter::new(&mut rng);

    let mut properties = Vec::with_capacity(config.n_endpoints);
    let mut states = Vec::with_capacity(config.n_endpoints);
    let mut signals = Vec::new();
    let mut ground_truth = GroundTruth::new();

    for slot in 0..config.n_endpoints {
        let plan = if slot == 0 {
            canonical_endpoint(&mut rng, config.noise_level)
        } else {
            generated_endpoint(&mut rng, &mut stems, config)
        };
        ground_truth.insert(
            plan.property.name.clone(),
            GroundTruthEntry {
                state: plan.state.name.clone(),
                status: plan.status.name.clone(),
                request: plan.request.as_ref().map(|s| s.name.clone()),
            },
        );
        properties.push(plan.property);
        states.push(plan.state);
        signals.push(plan.status);
        if let Some(request) = plan.request {
            signals.push(request);
        }
    }

    let n_distractors = config.n_endpoints * config.distractors_per_endpoint;
    for _ in 0..n_distractors {
        signals.push(distractor_signal(&mut rng, &mut stems));
    }

    Ok(SpecBundle::new(
        properties,
        states,
        signals,
        Some(ground_truth),
    )?)
}

/// Slot 0 is always the climate-control triad, so every corpus contains the
/// one wiring whose names are fixed by convention elsewhere in the docs.
fn canonical_endpoint(rng: &mut SplitMix64, noise: f64) -> EndpointPlan {
    let labels = ["OFF", "STANDARD", "ECO"];
    let entries: Vec<CodedEntry> = labels
        .iter()
        .enumerate()
        .map(|(code, label)| CodedEntry {
            label: (*label).to_string(),
            code: code as u64,
        })
        .collect();
    let shape = StateShape::Coded { entries };
    let state = StateDef {
        name: "ACState".into(),
        source_text: decl_text("ACState", &shape),
        shape,
    };
    let property = PropertyDef {
        name: "acMode".into(),
        kind: PropertyKind::Enum {
            labels: labels.iter().map(|l| (*l).to_string()).collect(),
        },
        access: Access::ReadWrite,
        description: "Cabin air conditioning operating mode.".into(),
        endpoint_path: "/climate".into(),
    };
    let status = true_signal(
        "APIACModeStatus",
        SignalDirection::Status,
        8,
        SignalEncoding::RawCode,
        "Reports the AC mode selected by the climate controller.",
        "ACState",
        rng.chance(noise),
    );
    let request = true_signal(
        "APIACModeRqst",
        SignalDirection::Request,
        8,
        SignalEncoding::RawCode,
        "Requests a change of the AC mode.",
        "ACState",
        rng.chance(noise),
    );
    EndpointPlan {
        property,
        state,
        status,
        request: Some(request),
    }
}

fn true_signal(
    name: &str,
    direction: SignalDirection,
    width_bits: u8,
    encoding: SignalEncoding,
    base_description: &str,
    state_name: &str,
    noisy: bool,
) -> SignalDef {
    let description = if noisy {
        base_description.to_string()
    } else {
        format!("{base_description} State: {state_name}.")
    };
    SignalDef {
        doc_id: name.to_string(),
        name: name.to_string(),
        direction,
        width_bits,
        encoding,
        description,
    }
}

fn generated_endpoint(
    rng: &mut SplitMix64,
    stems: &mut StemIter,
    config: &CorpusConfig,
) -> EndpointPlan {
    let (adj, noun) = stems.next_stem();
    let is_enum = rng.chance(config.enum_ratio);
    let read_write = !rng.chance(READ_ONLY_RATIO);

    let stem_pascal = format!("{}{}", pascal(&adj), pascal(&noun));
    let state_name = format!("{stem_pascal}State");
    let suffix = if is_enum { "Mode" } else { "Level" };
    let property_name = format!("{adj}{}{suffix}", pascal(&noun));
    let endpoint_path = format!("/{adj}-{noun}");
    let signal_stem = format!("API{stem_pascal}{suffix}");

    let (kind, shape, width, encoding) = if is_enum {
        let mut pool: Vec<&str> = ENUM_LABELS.to_vec();
        rng.shuffle(&mut pool);
        let count = 3 + rng.below(3);
        let mut labels: Vec<String> = pool[..count].iter().map(|l| (*l).to_string()).collect();
        labels.sort();
        let entries: Vec<CodedEntry> = labels
            .iter()
            .enumerate()
            .map(|(code, label)| CodedEntry {
                label: label.clone(),
                code: code as u64,
            })
            .collect();
        (
            PropertyKind::Enum { labels },
            StateShape::Coded { entries },
            8u8,
            SignalEncoding::RawCode,
        )
    } else {
        let (unit, scale, offset) = SCALAR_UNITS[rng.below(SCALAR_UNITS.len())];
        (
            PropertyKind::Number {
                unit: unit.to_string(),
                min: offset,
                max: offset + scale * SCALAR_MAX_RAW,
            },
            StateShape::Scalar {
                unit: unit.to_string(),
                scale,
                offset,
            },
            SCALAR_WIDTH,
            SignalEncoding::Linear { scale, offset },
        )
    };

    let description = if is_enum {
        format!("Selects the {adj} {noun} mode.")
    } else {
        format!("Current {adj} {noun} level.")
    };
    let property = PropertyDef {
        name: property_name,
        kind,
        access: if read_write {
            Access::ReadWrite
        } else {
            Access::ReadOnly
        },
        description,
        endpoint_path,
    };
    let state = StateDef {
        name: state_name.clone(),
        source_text: decl_text(&state_name, &shape),
        shape,
    };

    let status = true_signal(
        &format!("{signal_stem}Status"),
        SignalDirection::Status,
        width,
        encoding.clone(),
        &format!("Reports the current {adj} {noun} {} from the {noun} controller.", suffix.to_lowercase()),
        &state_name,
        rng.chance(config.noise_level),
    );
    let request = if read_write {
        Some(true_signal(
            &format!("{signal_stem}Rqst"),
            SignalDirection::Request,
            width,
            encoding,
            &format!("Requests a new {adj} {noun} {}.", suffix.to_lowercase()),
            &state_name,
            rng.chance(config.noise_level),
        ))
    } else {
        // Keep the draw count independent of access so unrelated endpoints
        // do not shift when READ_ONLY_RATIO changes an earlier outcome.
        let _ = rng.chance(config.noise_level);
        None
    };

    EndpointPlan {
        property,
        state,
        status,
        request,
    }
}

/// Distractors reuse the stem pool for plausible partial token overlap, but
/// their descriptions never name a state.
fn distractor_signal(rng: &mut SplitMix64, stems: &mut StemIter) -> SignalDef {
    let (adj, noun) = stems.next_stem();
    let direction = if rng.chance(0.5) {
        SignalDirection::Status
    } else {
        SignalDirection::Request
    };
    let suffix = DISTRACTOR_SUFFIXES[rng.below(DISTRACTOR_SUFFIXES.len())];
    let word = DISTRACTOR_WORDS[rng.below(DISTRACTOR_WORDS.len())];
    let width = [4u8, 8, 16][rng.below(3)];
    let dir_suffix = match direction {
        SignalDirection::Status => "Status",
        SignalDirection::Request => "Rqst",
    };
    let name = format!("API{}{}{suffix}{dir_suffix}", pascal(&adj), pascal(&noun));
    SignalDef {
        doc_id: name.clone(),
        name,
        direction,
        width_bits: width,
        encoding: SignalEncoding::RawCode,
        description: format!("Internal {adj} {noun} diagnostic {word} for bench calibration."),
    }
}
