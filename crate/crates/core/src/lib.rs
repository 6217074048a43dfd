//! Interaction-aware force and impedance control with energy-tank passivity.
//!
//! The crate is organised bottom-up: [`geometry`] builds the directional
//! projectors, [`plant`] simulates the Cartesian robot, its environment and a
//! scripted human, [`tanks`] holds the dual-chamber energy tanks,
//! [`controller`] combines them into the unified law, and [`scenarios`] runs
//! the experiments and computes metrics.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod passivity;
pub mod plant;
pub mod scenarios;
pub mod baselines;
pub mod config;
pub mod controller;
pub mod tanks;
pub mod trace;
