//! Physics-informed neural surrogates for the 1-D wave equation, with
//! data enrichment from certified reduced-order models and an
//! error-sensitive data loss that never forces the network to fit surrogate
//! data beyond its certified error bound.
//!
//! Pipeline: [`fem`] builds the full-order finite-element reference, [`rom`]
//! derives reduced models with per-time error certificates, [`network`] is a
//! small tanh network with exact input derivatives up to second order,
//! [`losses`] and [`trainer`] assemble the weighted physics/data losses and
//! run seeded training experiments, and the CLI wires everything into
//! reproducible figure-style outputs.

#![allow(clippy::needless_range_loop)]

pub mod analytic;
pub mod config;
pub mod fem;
pub mod formats;
pub mod losses;
pub mod network;
pub mod plot;
pub mod rom;
pub mod trainer;
