//! Engine for treating endpoint wiring and regression testing as executable
//! artifacts: given an OpenAPI-subset document, a state-definition file, and
//! a CAN signal registry, it retrieves candidate signals per property,
//! synthesizes endpoint implementations through an exchangeable oracle, and
//! generates test suites that run against a deterministic in-process vehicle
//! simulator.

pub mod coder;
pub mod corpus;
pub mod model;
pub mod oracle;
pub mod retrieval;
pub mod runner;
pub mod sim;
pub mod tester;
