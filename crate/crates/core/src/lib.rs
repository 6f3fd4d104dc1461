//! Simulation and estimation toolkit for directional scanning sounding (DSS).
//!
//! A DSS receiver rotates a directional antenna through `M` azimuth steps and
//! records a wideband frequency response per step. Stacking the per-direction
//! power delay profiles yields the power-angle-delay profile ([`Padp`]), from
//! which multipath components are estimated:
//!
//! - [`estimation::estimate_o1`] / [`estimation::estimate_o2`]: omnidirectional
//!   synthesis by maximum or sum over directions, angle quantized to the scan grid;
//! - [`estimation::haed`]: 2-D PADP peak search refined with the normalized
//!   power difference of the adjacent scan directions, optionally followed by
//!   band-limited delay interpolation.
//!
//! [`crlb`] builds the Fisher information of the wideband DSS signal model and
//! [`experiments`] runs seeded Monte Carlo studies comparing the estimators
//! against the bound.

pub mod antenna;
pub mod crlb;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod io;
pub mod synthesis;

use std::f64::consts::PI;

pub use antenna::{AntennaPattern, PatternKind, Side};
pub use error::{Error, Result};
pub use estimation::{Method, MpcEstimate, PeakConfig};
pub use synthesis::{ArrayConfig, CfrSet, CirSet, MpcTruth, Padp, SoundingConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wrap an angle to [-pi, pi).
pub fn wrap_pi(x: f64) -> f64 {
    let y = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Wrap an angle to [0, 2 pi).
pub fn wrap_2pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y >= 2.0 * PI {
        0.0
    } else {
        y
    }
}

/// Signed circular difference `a - b` in (-pi, pi].
pub fn angle_error(a: f64, b: f64) -> f64 {
    let d = wrap_pi(a - b);
    if d == -PI {
        PI
    } else {
        d
    }
}
