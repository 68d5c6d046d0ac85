//! Deterministic vehicle stand-in: a state store plus a signal bus where
//! request signals drive state transitions and status signals reflect state.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{SignalDirection, SpecBundle, StateShape};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bundle carries no ground truth; the sim cannot be wired")]
    NoGroundTruth,
    #[error("unknown signal '{0}'")]
    UnknownSignal(String),
    #[error("unknown state '{0}'")]
    UnknownState(String),
    #[error("signal '{signal}' is a {actual} signal; this operation needs {expected}")]
    WrongDirection {
        signal: String,
        actual: &'static str,
        expected: &'static str,
    },
    #[error("code {code} is out of range for state '{state}'")]
    CodeOutOfRange { state: String, code: u64 },
}

/// When an accepted write lands on its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickPolicy {
    Immediate,
    /// Applies after this many ticks; zero is treated as one.
    Deferred(u32),
}

/// Outcome of a write. Out-of-range values come back as `Rejected`, never as
/// an error: a wrong synthesized implementation must fail tests, not crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteAck {
    Applied,
    Pending,
    Rejected,
}

impl WriteAck {
    pub fn accepted(self) -> bool {
        !matches!(self, WriteAck::Rejected)
    }
}

/// One bus event. Back-door sets record the state name in `via`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub tick: u64,
    pub via: String,
    pub raw: u64,
    pub accepted: bool,
    pub back_door: bool,
}

// Values a state may hold. Coded states are confined to their declared code
// set; everything else is bounded by the carrying signal's width.
#[derive(Debug, Clone)]
enum Domain {
    Coded(BTreeSet<u64>),
    Raw { max: u64 },
}

impl Domain {
    fn contains(&self, code: u64) -> bool {
        match self {
            Domain::Coded(codes) => codes.contains(&code),
            Domain::Raw { max } => code <= *max,
        }
    }
}

#[derive(Debug, Clone)]
struct StateCell {
    code: u64,
    domain: Domain,
}

#[derive(Debug, Clone)]
struct Wire {
    state: String,
    direction: SignalDirection,
}

#[derive(Debug, Clone)]
struct PendingWrite {
    due: u64,
    state: String,
    raw: u64,
}

/// The simulator. States hold raw codes; signals transport raw codes; any
/// physical interpretation (scale, offset, labels) lives in the endpoint
/// implementations that talk to the bus.
#[derive(Debug, Clone)]
pub struct VehicleSim {
    states: BTreeMap<String, StateCell>,
    wiring: BTreeMap<String, Wire>,
    tick_policy: TickPolicy,
    tick: u64,
    pending: Vec<PendingWrite>,
    event_log: Vec<LogEntry>,
}

impl VehicleSim {
    /// Builds a sim from a bundle's ground truth. True signals are wired to
    /// their governed states; every other signal lands on an inert dummy
    /// state so that a wrong synthesis fails tests instead of crashing.
    /// Coded states start at their lowest declared code, scalars at raw 0.
    pub fn wire(bundle: &SpecBundle) -> Result<VehicleSim, SimError> {
        let ground_truth = bundle.ground_truth.as_ref().ok_or(SimError::NoGroundTruth)?;

        let mut states = BTreeMap::new();
        for state in &bundle.states {
            let (code, domain) = match &state.shape {
                StateShape::Coded { entries } => {
                    let codes: BTreeSet<u64> = entries.iter().map(|e| e.code).collect();
                    let lowest = codes.iter().next().copied().unwrap_or(0);
                    (lowest, Domain::Coded(codes))
                }
                // Width refined below once the carrying signal is known.
                StateShape::Scalar { .. } => (0, Domain::Raw { max: u64::MAX }),
            };
            states.insert(state.name.clone(), StateCell { code, domain });
        }

        let mut wiring = BTreeMap::new();
        for entry in ground_truth.values() {
            if !states.contains_key(&entry.state) {
                return Err(SimError::UnknownState(entry.state.clone()));
            }
            let mut attach = |signal_name: &str| -> Result<(), SimError> {
                let signal = bundle
                    .signal(signal_name)
                    .ok_or_else(|| SimError::UnknownSignal(signal_name.to_string()))?;
                let cell = states.get_mut(&entry.state).expect("checked above");
                if let Domain::Raw { max } = &mut cell.domain {
                    *max = (*max).min(signal.max_raw());
                }
                wiring.insert(
                    signal.name.clone(),
                    Wire {
                        state: entry.state.clone(),
                        direction: signal.direction,
                    },
                );
                Ok(())
            };
            attach(&entry.status)?;
            if let Some(request) = &entry.request {
                attach(request)?;
            }
        }

        for signal in &bundle.signals {
            if wiring.contains_key(&signal.name) {
                continue;
            }
            let dummy = format!("_dummy_{}", signal.name);
            states.insert(
                dummy.clone(),
                StateCell {
                    code: 0,
                    domain: Domain::Raw {
                        max: signal.max_raw(),
                    },
                },
            );
            wiring.insert(
                signal.name.clone(),
                Wire {
                    state: dummy,
                    direction: signal.direction,
                },
            );
        }

        Ok(VehicleSim {
            states,
            wiring,
            tick_policy: TickPolicy::Immediate,
            tick: 0,
            pending: Vec::new(),
            event_log: Vec::new(),
        })
    }

    pub fn tick_policy(&self) -> TickPolicy {
        self.tick_policy
    }

    pub fn set_tick_policy(&mut self, policy: TickPolicy) {
        self.tick_policy = policy;
    }

    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.event_log
    }

    /// Event log as line-delimited JSON, one record per entry.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        for entry in &self.event_log {
            out.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Current raw code of a state. Inspection only; not logged.
    pub fn state_code(&self, state: &str) -> Result<u64, SimError> {
        self.states
            .get(state)
            .map(|cell| cell.code)
            .ok_or_else(|| SimError::UnknownState(state.to_string()))
    }

    /// All state codes at once, dummies included. Handy for asserting that
    /// an operation touched nothing else.
    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        self.states
            .iter()
            .map(|(name, cell)| (name.clone(), cell.code))
            .collect()
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.keys().map(String::as_str)
    }

    pub fn wired_signals(&self) -> impl Iterator<Item = (&str, SignalDirection)> {
        self.wiring
            .iter()
            .map(|(name, wire)| (name.as_str(), wire.direction))
    }

    /// Writes a raw value to a request signal. In-range values land on the
    /// governed state now (immediate policy) or after the deferred delay;
    /// out-of-range values are rejected and change nothing. Both outcomes
    /// log exactly one event.
    pub fn write_signal(&mut self, signal: &str, raw: u64) -> Result<WriteAck, SimError> {
        let wire = self
            .wiring
            .get(signal)
            .ok_or_else(|| SimError::UnknownSignal(signal.to_string()))?;
        if wire.direction != SignalDirection::Request {
            return Err(SimError::WrongDirection {
                signal: signal.to_string(),
                actual: "status",
                expected: "request",
            });
        }
        let state = wire.state.clone();
        let in_range = self.states[&state].domain.contains(raw);
        self.event_log.push(LogEntry {
            tick: self.tick,
            via: signal.to_string(),
            raw,
            accepted: in_range,
            back_door: false,
        });
        if !in_range {
            return Ok(WriteAck::Rejected);
        }
        match self.tick_policy {
            TickPolicy::Immediate => {
                self.states.get_mut(&state).expect("wired state exists").code = raw;
                Ok(WriteAck::Applied)
            }
            TickPolicy::Deferred(n) => {
                self.pending.push(PendingWrite {
                    due: self.tick + u64::from(n.max(1)),
                    state,
                    raw,
                });
                Ok(WriteAck::Pending)
            }
        }
    }

    /// Reads a status signal: the governed state's current raw code. Pure.
    pub fn read_signal(&self, signal: &str) -> Result<u64, SimError> {
        let wire = self
            .wiring
            .get(signal)
            .ok_or_else(|| SimError::UnknownSignal(signal.to_string()))?;
        if wire.direction != SignalDirection::Status {
            return Err(SimError::WrongDirection {
                signal: signal.to_string(),
                actual: "request",
                expected: "status",
            });
        }
        Ok(self.states[&wire.state].code)
    }

    /// Test back-door: sets a state directly, bypassing the bus and the tick
    /// policy. Out-of-range codes are an error here (the caller is the test
    /// harness, not a synthesized implementation). Logged with a marker.
    pub fn set_state(&mut self, state: &str, code: u64) -> Result<(), SimError> {
        let cell = self
            .states
            .get_mut(state)
            .ok_or_else(|| SimError::UnknownState(state.to_string()))?;
        if !cell.domain.contains(code) {
            return Err(SimError::CodeOutOfRange {
                state: state.to_string(),
                code,
            });
        }
        cell.code = code;
        self.event_log.push(LogEntry {
            tick: self.tick,
            via: state.to_string(),
            raw: code,
            accepted: true,
            back_door: true,
        });
        Ok(())
    }

    /// Advances time one tick and applies any deferred writes that come due,
    /// in the order they were written.
    pub fn tick(&mut self) {
        self.tick += 1;
        let mut remaining = Vec::with_capacity(self.pending.len());
        for write in std::mem::take(&mut self.pending) {
            if write.due <= self.tick {
                self.states
                    .get_mut(&write.state)
                    .expect("pending writes reference wired states")
                    .code = write.raw;
            } else {
                remaining.push(write);
            }
        }
        self.pending = remaining;
    }

    /// Verifies the wiring invariants: every status read equals its governed
    /// state's code and every coded state holds a declared code.
    pub fn check_coherence(&self) -> Result<(), String> {
        for (signal, wire) in &self.wiring {
            if wire.direction != SignalDirection::Status {
                continue;
            }
            let read = self
                .read_signal(signal)
                .map_err(|e| format!("status read failed: {e}"))?;
            let held = self.states[&wire.state].code;
            if read != held {
                return Err(format!(
                    "signal '{signal}' reads {read} but state '{}' holds {held}",
                    wire.state
                ));
            }
        }
        for (name, cell) in &self.states {
            if let Domain::Coded(codes) = &cell.domain {
                if !codes.contains(&cell.code) {
                    return Err(format!(
                        "state '{name}' holds undeclared code {}",
                        cell.code
                    ));
                }
            }
        }
        Ok(())
    }
}
