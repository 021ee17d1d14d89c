//! Collective-motion laboratory: microscopic Vicsek-type particle
//! dynamics, von Mises-Fisher closure coefficients, and a relaxation
//! finite-volume solver for the Self-Organized Hydrodynamics system,
//! with scenario builders and particle-vs-continuum comparison metrics.

pub mod coefficients;
pub mod commands;
pub mod config;
pub mod particles;
pub mod quad;
pub mod rngstream;
pub mod scenarios;
pub mod soh;
pub mod vector;
