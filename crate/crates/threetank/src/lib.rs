//! Three-tank hydraulic benchmark: nonlinear plant simulation, fault
//! injection, flatness-based redundancy and control, windowed algebraic
//! differentiation, and signature-based fault detection and isolation.
//!
//! Tank T1 and tank T2 are fed by pumps; T3 sits between them and is coupled
//! to both through pipes. Levels are reconstructed analytically from either
//! flat output Z1 = (x1, x3) or Z2 = (x2, x3), and the mismatch between
//! measured and reconstructed channels drives the diagnosis layer.

pub mod control;
pub mod differentiator;
pub mod fault;
pub mod fdi;
pub mod flatness;
pub mod plant;
