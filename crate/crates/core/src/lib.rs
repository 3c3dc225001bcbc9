//! Emergency-aware access control.
//!
//! `feac-core` plans response paths over concurrent emergencies, hands out
//! time-bounded emergency-role permissions, substitutes failed entities and
//! records every step in an append-only audit trace that can be re-checked
//! offline. Scenarios are written in a small line-oriented language and run
//! in virtual time.

pub mod engine;
pub mod cli;
pub mod fault;
pub mod model;
pub mod num;
pub mod planner;
pub mod scenario;
