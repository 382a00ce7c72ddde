//! Geometric-phase analysis of the driven fgge two-level subspaces and the
//! closed-form CZ pulse conditions, plus the flat-top raised-cosine pulse
//! envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TipError};
use crate::hilbert::TransmonId;

/// Flat-top drive pulse with raised-cosine edges.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TipPulse {
    /// Drive amplitude Omega_d, cyclic MHz.
    pub amp_mhz: f64,
    /// Drive frequency omega_d, cyclic MHz.
    pub freq_mhz: f64,
    /// Flat-top duration, ns.
    pub flat_top_ns: f64,
    /// Raised-cosine edge length (half period), ns.
    pub edge_ns: f64,
    /// Driven transmon.
    pub target: TransmonId,
}

impl TipPulse {
    pub fn new(amp_mhz: f64, freq_mhz: f64, flat_top_ns: f64, edge_ns: f64, target: TransmonId) -> Result<Self> {
        if flat_top_ns < 0.0 || edge_ns < 0.0 {
            return Err(TipError::InvalidArgument(
                "pulse durations must be nonnegative".into(),
            ));
        }
        Ok(Self { amp_mhz, freq_mhz, flat_top_ns, edge_ns, target })
    }

    /// Total pulse length including both edges, ns.
    pub fn total_ns(&self) -> f64 {
        self.flat_top_ns + 2.0 * self.edge_ns
    }
}

/// Envelope value at time t (ns since pulse start), MHz. Zero outside
/// [0, flat_top + 2 edge], continuous everywhere.
pub fn pulse_envelope(t_ns: f64, pulse: &TipPulse) -> f64 {
    let e = pulse.edge_ns;
    let tau = pulse.flat_top_ns;
    let total = tau + 2.0 * e;
    if t_ns <= 0.0 || t_ns >= total {
        return 0.0;
    }
    if e > 0.0 && t_ns < e {
        return pulse.amp_mhz * 0.5 * (1.0 - (std::f64::consts::PI * t_ns / e).cos());
    }
    if e > 0.0 && t_ns > total - e {
        let back = total - t_ns;
        return pulse.amp_mhz * 0.5 * (1.0 - (std::f64::consts::PI * back / e).cos());
    }
    pulse.amp_mhz
}

/// Phase acquired by the initially-populated level of a driven two-level
/// subspace after one full generalized Rabi cycle, in the frame where the
/// computational reference idles. `delta` and `rabi` share any unit.
pub fn geometric_phase(delta: f64, rabi: f64) -> Result<f64> {
    let norm = (delta * delta + rabi * rabi).sqrt();
    if norm == 0.0 {
        return Err(TipError::InvalidArgument(
            "geometric phase undefined for delta = rabi = 0".into(),
        ));
    }
    Ok(std::f64::consts::PI * (1.0 - delta / norm))
}

/// Closed-form pulse conditions for the CZ gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GateSolution {
    /// Detuning of the control-ground fgge resonance from the drive, MHz.
    pub delta_g_mhz: f64,
    /// Detuning of the control-excited fgge resonance from the drive, MHz.
    pub delta_e_mhz: f64,
    /// Required fgge Rabi rate, MHz.
    pub rabi_mhz: f64,
    /// Interaction time for one full cycle, ns.
    pub gate_time_ns: f64,
    /// Drive frequency, MHz. Populated by [`GateSolution::with_resonance`];
    /// NaN until then because the closed form only fixes the offset.
    pub drive_freq_mhz: f64,
}

impl GateSolution {
    /// Fill in the absolute drive frequency given the control-ground fgge
    /// resonance frequency (MHz).
    pub fn with_resonance(mut self, omega_fgge_g_mhz: f64) -> Self {
        self.drive_freq_mhz = omega_fgge_g_mhz - self.delta_g_mhz;
        self
    }

    /// Generalized Rabi rate in the control-ground subspace, MHz.
    pub fn generalized_rabi_g(&self) -> f64 {
        (self.delta_g_mhz.powi(2) + self.rabi_mhz.powi(2)).sqrt()
    }

    pub fn generalized_rabi_e(&self) -> f64 {
        (self.delta_e_mhz.powi(2) + self.rabi_mhz.powi(2)).sqrt()
    }
}

/// Symmetric drive conditions: drive at the midpoint of the two fgge
/// resonances, Rabi rate sqrt(3)/2 times the shift, one full cycle.
pub fn cz_conditions_symmetric(delta_fgge_mhz: f64) -> Result<GateSolution> {
    if delta_fgge_mhz == 0.0 {
        return Err(TipError::InvalidArgument(
            "zero fgge shift: gate time diverges".into(),
        ));
    }
    let d = delta_fgge_mhz;
    Ok(GateSolution {
        delta_g_mhz: d / 2.0,
        delta_e_mhz: -d / 2.0,
        rabi_mhz: 3f64.sqrt() * d.abs() / 2.0,
        gate_time_ns: 1e3 / d.abs(),
        drive_freq_mhz: f64::NAN,
    })
}

/// Detuning delta' = omega_fgge^g - omega_d that keeps the geometric-phase
/// difference at pi with equal generalized Rabi rates when the two
/// subspaces have Rabi ratio r = Omega^e / Omega^g.
pub fn cz_conditions_asymmetric(r: f64, delta_fgge_mhz: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(TipError::InvalidArgument(format!(
            "Rabi ratio must be positive, got {r}"
        )));
    }
    let u = r * r - 1.0;
    let frac = if u.abs() < 1e-9 {
        0.5
    } else {
        (-1.0 + (r * r * u + 1.0).sqrt()) / u
    };
    Ok(frac * delta_fgge_mhz)
}
