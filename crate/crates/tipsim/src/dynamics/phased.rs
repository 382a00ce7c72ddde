//! Interaction-picture representation of the driven system.
//!
//! The propagators work in the frame of the diagonal part of the static
//! Hamiltonian: with G = diag(H0), the picture state is
//! psi_I = exp(+i G t) psi_lab, and what remains of the generator is a
//! sparse collection of phased matrix elements
//!     H_I(t)[r, c] = amp * exp(i freq t) * envelope(t),
//! one per static coupling or rotating drive component. This removes the
//! fast diagonal phases from the integrated state, so step sizes are set by
//! detunings of the couplings rather than by absolute level energies.
//!
//! Jump operators whose nonzero elements all share the same frame-energy
//! difference (single-ladder and dephasing jumps do) are static in this
//! picture up to a global phase that cancels inside the dissipator.

use ndarray::Array2;

use crate::error::{Result, TipError};
use crate::hilbert::{mhz_to_angular, OperatorMatrix};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy)]
pub(crate) struct PhasedTerm {
    pub row: usize,
    pub col: usize,
    /// Matrix element in rad/ns (couplings) or dimensionless (drive, scaled
    /// later by the envelope in rad/ns).
    pub amp: C64,
    /// Phase velocity of this element in the interaction picture, rad/ns.
    pub freq: f64,
    pub driven: bool,
}

pub(crate) struct PhasedSystem {
    pub dim: usize,
    /// Interaction-picture generator: diagonal of the static Hamiltonian.
    pub frame_energies: Vec<f64>,
    pub terms: Vec<PhasedTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveFrame {
    /// Full cosine drive; keeps co- and counter-rotating components.
    Lab,
    /// Co-rotating component only (rotating-wave drive).
    RotatingRwa,
}

impl PhasedSystem {
    /// Build from a static Hamiltonian (rad/ns) and an optional drive
    /// operator with carrier frequency (MHz). The drive amplitude enters at
    /// propagation time through the envelope.
    pub fn new(
        h0: &OperatorMatrix,
        drive: Option<(&OperatorMatrix, f64, DriveFrame)>,
    ) -> Result<Self> {
        let dim = h0.dim();
        if h0.hermiticity_defect() > 1e-12 {
            return Err(TipError::InvalidArgument(
                "static Hamiltonian is not Hermitian".into(),
            ));
        }
        let frame_energies: Vec<f64> = (0..dim).map(|i| h0.matrix[[i, i]].re).collect();
        let mut terms = Vec::new();
        for r in 0..dim {
            for c in (r + 1)..dim {
                let v = h0.matrix[[r, c]];
                if v.norm() > 0.0 {
                    terms.push(PhasedTerm {
                        row: r,
                        col: c,
                        amp: v,
                        freq: frame_energies[r] - frame_energies[c],
                        driven: false,
                    });
                }
            }
        }
        if let Some((op, freq_mhz, frame)) = drive {
            if op.dim() != dim {
                return Err(TipError::DimensionMismatch { expected: dim, got: op.dim() });
            }
            let wd = mhz_to_angular(freq_mhz);
            for r in 0..dim {
                if op.matrix[[r, r]].norm() > 1e-14 {
                    return Err(TipError::InvalidArgument(
                        "drive operators with diagonal elements are not supported".into(),
                    ));
                }
                for c in (r + 1)..dim {
                    let v = op.matrix[[r, c]];
                    if v.norm() == 0.0 {
                        continue;
                    }
                    let base = frame_energies[r] - frame_energies[c];
                    // cos(wd t) = (e^{+i wd t} + e^{-i wd t})/2; each element
                    // picks up both sidebands, of which one is slow.
                    let both = [base + wd, base - wd];
                    match frame {
                        DriveFrame::Lab => {
                            for f in both {
                                terms.push(PhasedTerm { row: r, col: c, amp: v, freq: f, driven: true });
                            }
                        }
                        DriveFrame::RotatingRwa => {
                            let slow = if both[0].abs() <= both[1].abs() { both[0] } else { both[1] };
                            terms.push(PhasedTerm { row: r, col: c, amp: v, freq: slow, driven: true });
                        }
                    }
                }
            }
        }
        Ok(Self { dim, frame_energies, terms })
    }

    /// max |phase velocity| over terms; sets the initial step guess.
    pub fn max_freq(&self) -> f64 {
        self.terms.iter().map(|t| t.freq.abs()).fold(1e-3, f64::max)
    }

    /// dPsi/dt = -i H_I(t) Psi for a dim x k column block stored row-major.
    /// `drive_env` is the envelope in rad/ns at time t; the cosine 1/2 is
    /// already folded into the sideband decomposition.
    pub fn apply_rhs_columns(
        &self,
        t: f64,
        drive_env_rad: f64,
        psi: &[C64],
        out: &mut [C64],
        k: usize,
    ) {
        out.fill(C64::new(0.0, 0.0));
        let minus_i = C64::new(0.0, -1.0);
        for term in &self.terms {
            let mut amp = term.amp * C64::from_polar(1.0, term.freq * t);
            if term.driven {
                amp *= 0.5 * drive_env_rad;
            }
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let f_rc = minus_i * amp;
            let f_cr = minus_i * amp.conj();
            let (r, c) = (term.row, term.col);
            for j in 0..k {
                out[r * k + j] += f_rc * psi[c * k + j];
                out[c * k + j] += f_cr * psi[r * k + j];
            }
        }
    }

    /// Commutator part of the master equation: out += -i [H_I(t), rho].
    pub fn accumulate_commutator(&self, t: f64, drive_env_rad: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let minus_i = C64::new(0.0, -1.0);
        for term in &self.terms {
            let mut amp = term.amp * C64::from_polar(1.0, term.freq * t);
            if term.driven {
                amp *= 0.5 * drive_env_rad;
            }
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let (r, c) = (term.row, term.col);
            let a_rc = minus_i * amp;
            let a_cr = minus_i * amp.conj();
            // -i H rho: row r accumulates amp * rho[c, :], row c the conjugate
            for j in 0..n {
                out[r * n + j] += a_rc * rho[c * n + j];
                out[c * n + j] += a_cr * rho[r * n + j];
            }
            // +i rho H: column c accumulates amp * rho[:, r], column r conj
            for i in 0..n {
                out[i * n + c] -= a_rc * rho[i * n + r];
                out[i * n + r] -= a_cr * rho[i * n + c];
            }
        }
    }

    /// Diagonal phases turning a picture state back into the lab frame at
    /// time t: psi_lab = exp(-i G t) psi_I.
    pub fn lab_phases(&self, t: f64) -> Vec<C64> {
        self.frame_energies.iter().map(|&e| C64::from_polar(1.0, -e * t)).collect()
    }
}

/// Sparse jump operator together with its dissipator ingredients.
pub(crate) struct SparseJump {
    /// Nonzero entries (row, col, value) of sqrt(rate) * L, in 1/sqrt(ns).
    pub entries: Vec<(usize, usize, C64)>,
    /// Diagonal of L'L (rate included), 1/ns.
    pub ndiag: Vec<f64>,
}

impl SparseJump {
    pub fn from_dense(op: &Array2<C64>, rate_per_ns: f64, frame_energies: &[f64]) -> Result<Self> {
        let n = op.nrows();
        let scale = rate_per_ns.sqrt();
        let mut entries = Vec::new();
        let mut shared: Option<f64> = None;
        for r in 0..n {
            for c in 0..n {
                let v = op[[r, c]];
                if v.norm() == 0.0 {
                    continue;
                }
                let df = frame_energies[r] - frame_energies[c];
                match shared {
                    None => shared = Some(df),
                    Some(s) => {
                        if (s - df).abs() > 1e-9 {
                            return Err(TipError::InvalidArgument(
                                "jump operator mixes frame frequencies; not covariant in the \
                                 interaction picture"
                                    .into(),
                            ));
                        }
                    }
                }
                entries.push((r, c, v * C64::new(scale, 0.0)));
            }
        }
        let mut ndiag = vec![0.0; n];
        for &(_, c, v) in &entries {
            ndiag[c] += v.norm_sqr();
        }
        Ok(Self { entries, ndiag })
    }

    /// out += L rho L' - 1/2 {L'L, rho}
    pub fn accumulate_dissipator(&self, rho: &[C64], out: &mut [C64], n: usize) {
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &self.entries {
                let w = v1 * v2.conj();
                out[r1 * n + r2] += w * rho[c1 * n + c2];
            }
        }
        for i in 0..n {
            for j in 0..n {
                let d = 0.5 * (self.ndiag[i] + self.ndiag[j]);
                if d != 0.0 {
                    out[i * n + j] -= C64::new(d, 0.0) * rho[i * n + j];
                }
            }
        }
    }
}
