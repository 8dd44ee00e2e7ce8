//! Conversions between user-facing plain frequencies and internal angular ones.

use std::f64::consts::TAU;

/// GHz to rad/ns.
pub fn ghz(f: f64) -> f64 {
    TAU * f
}

/// MHz to rad/ns.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e-3
}

/// rad/ns to GHz.
pub fn to_ghz(w: f64) -> f64 {
    w / TAU
}

/// rad/ns to MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TAU * 1e3
}
