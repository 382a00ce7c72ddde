//! Truncated three-transmon Hilbert space: ladder operators, the static
//! Hamiltonian of coupled Duffing oscillators (rotating-wave couplings), the
//! coupler drive operator, and dressed-state bookkeeping.
//!
//! Unit convention: the public API takes cyclic frequencies in MHz and times
//! in ns; every Hamiltonian matrix element is angular, in rad/ns. The
//! conversion happens in exactly one place (`mhz_to_angular`).

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TipError};
use crate::linalg::{self, C64};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Cyclic MHz -> angular rad/ns.
#[inline]
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    f_mhz * TWO_PI * 1e-3
}

/// Angular rad/ns -> cyclic MHz.
#[inline]
pub fn angular_to_mhz(w: f64) -> f64 {
    w / (TWO_PI * 1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmonId {
    A,
    B,
    C,
}

impl TransmonId {
    pub fn index(self) -> usize {
        match self {
            TransmonId::A => 0,
            TransmonId::B => 1,
            TransmonId::C => 2,
        }
    }
}

/// One fixed-frequency transmon in the truncated-oscillator model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransmonSpec {
    /// Fundamental (g-e) frequency, cyclic MHz.
    pub omega_mhz: f64,
    /// Anharmonicity, cyclic MHz (negative for transmons).
    pub alpha_mhz: f64,
    /// Truncation level count (>= 2).
    pub levels: usize,
}

impl TransmonSpec {
    pub fn new(omega_mhz: f64, alpha_mhz: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(TipError::InvalidArgument(format!(
                "transmon truncation needs at least 2 levels, got {levels}"
            )));
        }
        if !(omega_mhz > 0.0) || !alpha_mhz.is_finite() {
            return Err(TipError::InvalidArgument(
                "transmon frequency must be positive and anharmonicity finite".into(),
            ));
        }
        Ok(Self { omega_mhz, alpha_mhz, levels })
    }

    /// Bare Duffing energy of level k, angular rad/ns.
    pub fn level_energy(&self, k: usize) -> f64 {
        let kf = k as f64;
        mhz_to_angular(self.omega_mhz) * kf
            + mhz_to_angular(self.alpha_mhz) * 0.5 * kf * (kf - 1.0)
    }
}

/// Three transmons (two data, one coupler) with pairwise exchange couplings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceModel {
    /// Ordered (a, b, c); the coupler is c and carries the drive.
    pub transmons: [TransmonSpec; 3],
    pub g_ab_mhz: f64,
    pub g_ac_mhz: f64,
    pub g_bc_mhz: f64,
}

impl DeviceModel {
    pub fn new(transmons: [TransmonSpec; 3], g_ab_mhz: f64, g_ac_mhz: f64, g_bc_mhz: f64) -> Result<Self> {
        for g in [g_ab_mhz, g_ac_mhz, g_bc_mhz] {
            if !g.is_finite() {
                return Err(TipError::InvalidArgument("coupling must be finite".into()));
            }
        }
        Ok(Self { transmons, g_ab_mhz, g_ac_mhz, g_bc_mhz })
    }

    pub fn levels(&self) -> [usize; 3] {
        [self.transmons[0].levels, self.transmons[1].levels, self.transmons[2].levels]
    }

    pub fn dim(&self) -> usize {
        self.levels().iter().product()
    }

    /// Detuning omega_i - omega_j in MHz.
    pub fn detuning_mhz(&self, i: TransmonId, j: TransmonId) -> f64 {
        self.transmons[i.index()].omega_mhz - self.transmons[j.index()].omega_mhz
    }

    pub fn coupling_mhz(&self, i: TransmonId, j: TransmonId) -> f64 {
        use TransmonId::*;
        match (i, j) {
            (A, B) | (B, A) => self.g_ab_mhz,
            (A, C) | (C, A) => self.g_ac_mhz,
            (B, C) | (C, B) => self.g_bc_mhz,
            _ => 0.0,
        }
    }

    /// Dispersive-regime check: returns a warning string per pair with
    /// |g/Delta| >= 0.25. Not an error; strongly hybridized devices are
    /// legitimate inputs for sweeps.
    pub fn dispersive_warnings(&self) -> Vec<String> {
        use TransmonId::*;
        let mut out = Vec::new();
        for (i, j, g) in [(A, B, self.g_ab_mhz), (A, C, self.g_ac_mhz), (B, C, self.g_bc_mhz)] {
            let delta = self.detuning_mhz(i, j);
            if delta == 0.0 || (g / delta).abs() >= 0.25 {
                out.push(format!(
                    "pair {:?}-{:?}: |g/Delta| = {:.3} outside dispersive regime",
                    i,
                    j,
                    if delta == 0.0 { f64::INFINITY } else { (g / delta).abs() }
                ));
            }
        }
        out
    }
}

/// Dense complex operator on the full product space.
///
/// Hamiltonians are angular (rad/ns); everything else dimensionless.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: Array2<C64>,
}

impl OperatorMatrix {
    pub fn new(matrix: Array2<C64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operators must be square");
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }
}

/// Occupation label |k_a, k_b, k_c> in the canonical tensor order (a
/// slowest). Flattened index is k_a*L_b*L_c + k_b*L_c + k_c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BareLabel(pub [usize; 3]);

impl BareLabel {
    pub fn flatten(&self, levels: [usize; 3]) -> usize {
        debug_assert!(self.0[0] < levels[0] && self.0[1] < levels[1] && self.0[2] < levels[2]);
        (self.0[0] * levels[1] + self.0[1]) * levels[2] + self.0[2]
    }

    pub fn from_flat(index: usize, levels: [usize; 3]) -> Self {
        let c = index % levels[2];
        let b = (index / levels[2]) % levels[1];
        let a = index / (levels[1] * levels[2]);
        BareLabel([a, b, c])
    }
}

impl std::fmt::Display for BareLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sym = |k: usize| match k {
            0 => "g".to_string(),
            1 => "e".to_string(),
            2 => "f".to_string(),
            3 => "h".to_string(),
            n => n.to_string(),
        };
        write!(f, "|{}{}{}>", sym(self.0[0]), sym(self.0[1]), sym(self.0[2]))
    }
}

/// Annihilation and creation operators on a single truncated oscillator.
pub fn ladder_operators(levels: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if levels < 2 {
        return Err(TipError::InvalidArgument(format!(
            "ladder operators need at least 2 levels, got {levels}"
        )));
    }
    let mut lower: Array2<C64> = Array2::zeros((levels, levels));
    for k in 1..levels {
        lower[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    let raise = linalg::dagger(&lower);
    Ok((OperatorMatrix::new(lower), OperatorMatrix::new(raise)))
}

/// Embed a single-transmon operator into the three-transmon product space.
pub fn embed(op: &Array2<C64>, which: usize, levels: [usize; 3]) -> Array2<C64> {
    let mut out = linalg::identity(1);
    for (i, &l) in levels.iter().enumerate() {
        let factor = if i == which { op.clone() } else { linalg::identity(l) };
        out = linalg::kron(&out, &factor);
    }
    out
}

/// Static Hamiltonian: Duffing oscillators plus rotating-wave exchange
/// couplings, angular rad/ns.
pub fn build_static_hamiltonian(device: &DeviceModel) -> OperatorMatrix {
    let levels = device.levels();
    let dim = device.dim();
    let mut h: Array2<C64> = Array2::zeros((dim, dim));

    // Diagonal part directly from the level energies.
    for idx in 0..dim {
        let lab = BareLabel::from_flat(idx, levels);
        let e: f64 = (0..3).map(|i| device.transmons[i].level_energy(lab.0[i])).sum();
        h[[idx, idx]] = C64::new(e, 0.0);
    }

    use TransmonId::*;
    for (i, j) in [(A, B), (A, C), (B, C)] {
        let g = mhz_to_angular(device.coupling_mhz(i, j));
        if g == 0.0 {
            continue;
        }
        let (li, lj) = (levels[i.index()], levels[j.index()]);
        let (low_i, _) = ladder_operators(li).unwrap();
        let (low_j, _) = ladder_operators(lj).unwrap();
        let ai = embed(&low_i.matrix, i.index(), levels);
        let aj = embed(&low_j.matrix, j.index(), levels);
        let term = linalg::matmul(&linalg::dagger(&ai), &aj);
        let hop = &term + &linalg::dagger(&term);
        h = &h + &hop.mapv(|z| z * C64::new(g, 0.0));
    }
    OperatorMatrix::new(h)
}

/// Charge-type drive operator (a + a') on the target transmon, embedded in
/// the full space. The time-dependent prefactor Omega_d cos(omega_d t) is
/// applied by the dynamics module.
pub fn build_drive_operator(device: &DeviceModel, target: TransmonId) -> OperatorMatrix {
    let levels = device.levels();
    let (lower, _) = ladder_operators(levels[target.index()]).unwrap();
    let a = embed(&lower.matrix, target.index(), levels);
    let op = &a + &linalg::dagger(&a);
    OperatorMatrix::new(op)
}

/// Dressed-state assignment: each bare label paired with the eigenvector of
/// maximal squared overlap, resolved greedily in descending overlap order so
/// the map is a bijection.
#[derive(Debug, Clone)]
pub struct DressedMap {
    pub levels: [usize; 3],
    /// Eigenenergy (rad/ns) assigned to each flattened bare index.
    pub energies: Array1<f64>,
    /// Eigenvector (column) assigned to each flattened bare index.
    pub vectors: Array2<C64>,
    /// Squared overlap |<bare|dressed>|^2 for each assignment.
    pub overlaps: Array1<f64>,
    /// Bare indices whose assigned overlap is <= 0.5 (near-resonant states).
    pub ambiguous: Vec<usize>,
}

impl DressedMap {
    pub fn energy(&self, label: BareLabel) -> f64 {
        self.energies[label.flatten(self.levels)]
    }

    pub fn energy_mhz(&self, label: BareLabel) -> f64 {
        angular_to_mhz(self.energy(label))
    }

    /// Energy relative to the dressed ground state, MHz.
    pub fn relative_energy_mhz(&self, label: BareLabel) -> f64 {
        self.energy_mhz(label) - self.energy_mhz(BareLabel([0, 0, 0]))
    }

    pub fn is_ambiguous(&self) -> bool {
        !self.ambiguous.is_empty()
    }

    /// Error if any of the given labels was flagged ambiguous.
    pub fn require_unambiguous(&self, labels: &[BareLabel]) -> Result<()> {
        for &lab in labels {
            let idx = lab.flatten(self.levels);
            if self.ambiguous.contains(&idx) {
                return Err(TipError::AmbiguousDressing {
                    label: lab.to_string(),
                    overlap: self.overlaps[idx],
                });
            }
        }
        Ok(())
    }
}

pub fn dressed_state_map(h: &OperatorMatrix, levels: [usize; 3]) -> DressedMap {
    let dim = h.dim();
    assert_eq!(dim, levels.iter().product::<usize>());
    let linalg::Eigh { values, vectors } = linalg::eigh(&h.matrix);

    // Greedy assignment by descending overlap weight.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(dim * dim);
    for bare in 0..dim {
        for col in 0..dim {
            pairs.push((bare, col, vectors[[bare, col]].norm_sqr()));
        }
    }
    pairs.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap());

    let mut bare_done = vec![false; dim];
    let mut col_done = vec![false; dim];
    let mut assignment = vec![usize::MAX; dim];
    let mut overlaps = vec![0.0; dim];
    let mut assigned = 0;
    for (bare, col, w) in pairs {
        if bare_done[bare] || col_done[col] {
            continue;
        }
        bare_done[bare] = true;
        col_done[col] = true;
        assignment[bare] = col;
        overlaps[bare] = w;
        assigned += 1;
        if assigned == dim {
            break;
        }
    }

    let mut energies = Array1::zeros(dim);
    let mut cols = Array2::zeros((dim, dim));
    let mut ambiguous = Vec::new();
    for bare in 0..dim {
        let col = assignment[bare];
        energies[bare] = values[col];
        for i in 0..dim {
            cols[[i, bare]] = vectors[[i, col]];
        }
        if overlaps[bare] <= 0.5 {
            ambiguous.push(bare);
        }
    }

    DressedMap {
        levels,
        energies,
        vectors: cols,
        overlaps: Array1::from_vec(overlaps),
        ambiguous,
    }
}
