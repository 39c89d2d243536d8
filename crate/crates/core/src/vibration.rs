//! Vibration-induced Doppler sidelobes.
//!
//! A sinusoidal sensor displacement of amplitude `A` along the line of sight
//! phase-modulates the echo with index `a = 2π·2A/λ`. The first paired
//! sidelobe sits at the vibration frequency and its level relative to the
//! carrier is `20·log10(J₁(a)/J₀(a))`. This module designs a vibration that
//! reproduces a given sidelobe position and level.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{SarError, SarResult};

/// First positive zero of J₀.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

const SERIES_LIMIT: f64 = 12.0;

fn bessel_series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let half_sq = half * half;
    let mut term = (1..=order).fold(1.0, |t, k| t * half / k as f64);
    let mut sum = term;
    for k in 1..=200u32 {
        term *= -half_sq / (k as f64 * (k + order) as f64);
        sum += term;
        if k >= 25 && term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion, truncated at its smallest term.
fn bessel_asymptotic(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let (mut p, mut q) = (0.0, 0.0);
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60u32 {
        if term.abs() > last {
            break;
        }
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        last = term.abs();
        if last < 1e-17 {
            break;
        }
        let odd = (2 * k + 1) as f64;
        term *= (mu - odd * odd) / ((k + 1) as f64 * 8.0 * x);
    }
    let chi = x - (0.5 * order as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bessel function of the first kind, order 0.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        bessel_series(0, ax)
    } else {
        bessel_asymptotic(0, ax)
    }
}

/// Bessel function of the first kind, order 1.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        bessel_series(1, ax)
    } else {
        bessel_asymptotic(1, ax)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Vibration frequency whose Doppler offset maps to cross-range `x_vib` for a
/// target at closest-approach range `r_zd`.
pub fn vib_frequency_for_sidelobe(v_ego: f64, wavelength: f64, x_vib: f64, r_zd: f64) -> f64 {
    2.0 * v_ego / wavelength * x_vib / x_vib.hypot(r_zd)
}

/// `20·log10(J₁(a)/J₀(a))`; `−∞` at `a = 0`.
pub fn sidelobe_level_for_modulation(a: f64) -> SarResult<f64> {
    if !(0.0..J0_FIRST_ZERO).contains(&a) {
        return Err(SarError::ModulationOutOfDomain(a));
    }
    if a == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(20.0 * (bessel_j1(a) / bessel_j0(a)).log10())
}

/// Modulation index producing sidelobe level `level_db`.
pub fn modulation_for_sidelobe_level(level_db: f64) -> SarResult<f64> {
    if !(level_db < 0.0) {
        return Err(SarError::SidelobeLevelOutOfModel(level_db));
    }
    // J₁/J₀ ≈ a/2 for small a; start the bracket well below that estimate.
    // Bisect in ln(a) first, which handles very small levels, then refine in a.
    let estimate = 2.0 * 10f64.powf(level_db / 20.0);
    let mut lo = (estimate * 0.25).min(1e-3);
    let mut hi = J0_FIRST_ZERO * (1.0 - 1e-12);
    let f = |a: f64| sidelobe_level_for_modulation(a).map(|l| l - level_db);
    if f(lo)? > 0.0 {
        return Err(SarError::SidelobeLevelOutOfModel(level_db));
    }
    for _ in 0..200 {
        if hi / lo < 1.0 + 1e-3 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Line-of-sight vibration amplitude producing sidelobe level `level_db`.
pub fn vib_amplitude_for_sidelobe_level(level_db: f64, wavelength: f64) -> SarResult<f64> {
    Ok(modulation_for_sidelobe_level(level_db)? * wavelength / (4.0 * PI))
}

/// A complete single-tone vibration design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationDesign {
    pub x_vib_m: f64,
    pub r_zd_m: f64,
    pub v_ego_mps: f64,
    pub wavelength_m: f64,
    pub frequency_hz: f64,
    pub level_db: f64,
    pub amplitude_m: f64,
    pub modulation_index: f64,
}

impl VibrationDesign {
    pub fn new(x_vib_m: f64, r_zd_m: f64, v_ego_mps: f64, wavelength_m: f64, level_db: f64) -> SarResult<Self> {
        if !(r_zd_m > 0.0) {
            return Err(SarError::InvalidArgument("r_zd must be > 0".into()));
        }
        let a = modulation_for_sidelobe_level(level_db)?;
        Ok(VibrationDesign {
            x_vib_m,
            r_zd_m,
            v_ego_mps,
            wavelength_m,
            frequency_hz: vib_frequency_for_sidelobe(v_ego_mps, wavelength_m, x_vib_m, r_zd_m),
            level_db,
            amplitude_m: a * wavelength_m / (4.0 * PI),
            modulation_index: a,
        })
    }
}
