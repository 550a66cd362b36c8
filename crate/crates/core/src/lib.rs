//! Online stochastic bipartite matching with patience constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`instance`] – star and matching instances, validation, JSON files.
//! * [`lp`] – a dense two-phase simplex with duals and column addition.
//! * [`star`] – single-arrival probing: exact evaluation, the deterministic
//!   patience DP, the constant-hazard ordering, the LP-rounding policy for
//!   arbitrary patience distributions, brute force and pricing.
//! * [`online`] – the greedy adversarial matcher, the policy LP solved by
//!   column generation, the prophet and IID matchers, and SimpleGreedy.
//! * [`sim`] – seeded Monte Carlo, exact outcome-tree expansion and offline
//!   optimum oracles.
//! * [`hard`] – negative-result instance families and random generators.
//! * [`repro`] – end-to-end scenarios with expected-vs-observed reports.

pub mod error;
pub mod hard;
pub mod instance;
pub mod lp;
pub mod online;
pub mod repro;
pub mod sim;
pub mod star;

pub use error::{Error, Result};
