//! Time-domain propagation: unitary Schroedinger evolution with the
//! time-dependent coupler drive, deterministic Lindblad master-equation
//! evolution, chevron scans, the full pulse-level CZ-gate simulation, and
//! gate-fidelity metrics.

mod phased;
pub mod rk;
mod tip;

pub use phased::DriveFrame;
pub use tip::{
    simulate_tip_gate, simulate_tip_gate_channel, tip_gate_fidelity, TipGateResult,
    TipLindbladChannel,
};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TipError};
use crate::gatedesign::TipPulse;
use crate::hilbert::{
    build_drive_operator, build_static_hamiltonian, embed, mhz_to_angular, BareLabel, DeviceModel,
    OperatorMatrix, TransmonId, TWO_PI,
};
use crate::linalg::{self, C64};
use phased::{PhasedSystem, SparseJump};
use rk::RkOptions;

/// Relaxation and dephasing data for one transmon. Times in microseconds,
/// thermal population dimensionless.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherenceSpec {
    pub t1_us: f64,
    pub t1f_us: Option<f64>,
    pub t2_us: f64,
    pub t2f_us: Option<f64>,
    pub p_th: f64,
}

impl CoherenceSpec {
    pub fn new(t1_us: f64, t1f_us: Option<f64>, t2_us: f64, t2f_us: Option<f64>, p_th: f64) -> Self {
        assert!(t1_us > 0.0 && t2_us > 0.0, "coherence times must be positive");
        Self { t1_us, t1f_us, t2_us, t2f_us, p_th }
    }

    /// Energy-relaxation rate, 1/us.
    pub fn gamma1(&self) -> f64 {
        1.0 / self.t1_us
    }

    /// Pure-dephasing rate 1/T2 - 1/(2 T1), clamped at zero, 1/us.
    /// The bool reports whether clamping occurred.
    pub fn gamma_phi(&self) -> (f64, bool) {
        let g = 1.0 / self.t2_us - 0.5 / self.t1_us;
        if g < 0.0 {
            (0.0, true)
        } else {
            (g, false)
        }
    }

    /// f-level relaxation rate, 1/us (zero when no T1f was measured).
    pub fn gamma1f(&self) -> f64 {
        self.t1f_us.map(|t| 1.0 / t).unwrap_or(0.0)
    }

    /// e-f pure-dephasing rate from T2f = 1/(Gamma_phif + Gamma_1f/2), 1/us.
    pub fn gamma_phif(&self) -> (f64, bool) {
        match self.t2f_us {
            None => (0.0, false),
            Some(t2f) => {
                let g = 1.0 / t2f - 0.5 * self.gamma1f();
                if g < 0.0 {
                    (0.0, true)
                } else {
                    (g, false)
                }
            }
        }
    }

    /// Thermal excitation rate P_th / T1, 1/us.
    pub fn gamma_up(&self) -> f64 {
        self.p_th / self.t1_us
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ChannelKind {
    /// sqrt(G1) |g><e|
    Relaxation,
    /// sqrt(G1f) |e><f|
    RelaxationF,
    /// sqrt(2 Gphi) |e><e|
    Dephasing,
    /// sqrt(2 Gphif) |f><f|
    DephasingF,
    /// sqrt(G_up) |e><g|
    ThermalExcitation,
}

/// A set of jump operators with rates, on the full product space.
pub struct LindbladSpec {
    /// (operator, rate in 1/us)
    pub jumps: Vec<(OperatorMatrix, f64)>,
}

impl LindbladSpec {
    pub fn empty() -> Self {
        Self { jumps: Vec::new() }
    }

    pub fn push(&mut self, op: OperatorMatrix, rate_per_us: f64) -> Result<()> {
        if rate_per_us < 0.0 {
            return Err(TipError::InvalidArgument("jump rate must be nonnegative".into()));
        }
        self.jumps.push((op, rate_per_us));
        Ok(())
    }

    /// Single-transmon channel embedded in the device space.
    pub fn channel_operator(device: &DeviceModel, which: TransmonId, kind: ChannelKind) -> Array2<C64> {
        let levels = device.levels();
        let l = levels[which.index()];
        let mut op: Array2<C64> = Array2::zeros((l, l));
        match kind {
            ChannelKind::Relaxation => op[[0, 1]] = linalg::ONE,
            ChannelKind::ThermalExcitation => op[[1, 0]] = linalg::ONE,
            ChannelKind::RelaxationF => {
                if l > 2 {
                    op[[1, 2]] = linalg::ONE;
                }
            }
            ChannelKind::Dephasing => op[[1, 1]] = C64::new(2f64.sqrt(), 0.0),
            ChannelKind::DephasingF => {
                if l > 2 {
                    op[[2, 2]] = C64::new(2f64.sqrt(), 0.0);
                }
            }
        }
        embed(&op, which.index(), levels)
    }

    /// The standard channel set for the full device: relaxation and pure
    /// dephasing on every transmon, plus f-level relaxation and e-f
    /// dephasing where the corresponding times were measured.
    pub fn for_device(device: &DeviceModel, coherence: &[CoherenceSpec; 3]) -> Self {
        let mut spec = Self::empty();
        for (i, id) in [TransmonId::A, TransmonId::B, TransmonId::C].into_iter().enumerate() {
            let c = &coherence[i];
            let mut add = |kind, rate: f64| {
                if rate > 0.0 {
                    spec.jumps.push((
                        OperatorMatrix::new(Self::channel_operator(device, id, kind)),
                        rate,
                    ));
                }
            };
            add(ChannelKind::Relaxation, c.gamma1());
            add(ChannelKind::Dephasing, c.gamma_phi().0);
            add(ChannelKind::RelaxationF, c.gamma1f());
            add(ChannelKind::DephasingF, c.gamma_phif().0);
        }
        spec
    }

    fn sparse(&self, frame_energies: &[f64]) -> Result<Vec<SparseJump>> {
        self.jumps
            .iter()
            .map(|(op, rate)| SparseJump::from_dense(&op.matrix, rate * 1e-3, frame_energies))
            .collect()
    }
}

/// Drive description for the propagators. The envelope returns cyclic MHz.
pub struct DriveSpec<'a> {
    pub operator: &'a OperatorMatrix,
    pub envelope: &'a dyn Fn(f64) -> f64,
    pub freq_mhz: f64,
    pub frame: DriveFrame,
}

/// Integration options shared by the propagators.
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12 }
    }
}

impl SimOptions {
    pub fn with_rtol(rtol: f64) -> Self {
        Self { rtol, atol: rtol * 1e-3 }
    }
    fn rk(&self, system: &PhasedSystem, duration: f64) -> RkOptions {
        let h0 = (0.25 / system.max_freq()).min(duration.max(1e-9));
        RkOptions { rtol: self.rtol, atol: self.atol, max_steps: 50_000_000, h_init: Some(h0) }
    }
}

/// Result of a propagation: sampled times, per-label populations, sampled
/// states in the lab frame, and the final propagator when one was requested.
pub struct SimResult {
    pub times: Vec<f64>,
    /// populations[s][i]: bare-label population at sample s.
    pub populations: Vec<Vec<f64>>,
    /// Lab-frame state vectors (unitary path) at sample times.
    pub states: Vec<Array1<C64>>,
    /// Lab-frame density matrices (master-equation path) at sample times.
    pub densities: Vec<Array2<C64>>,
    /// Lab-frame propagator over the full duration (unitary path with
    /// column propagation).
    pub propagator: Option<Array2<C64>>,
}

/// Unitary propagation of one state.
pub fn propagate_unitary(
    h0: &OperatorMatrix,
    drive: Option<DriveSpec<'_>>,
    psi0: &Array1<C64>,
    duration_ns: f64,
    sample_times: &[f64],
    opts: &SimOptions,
) -> Result<SimResult> {
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(TipError::InvalidArgument(format!(
            "initial state norm {norm:.6} is not 1"
        )));
    }
    let cols = Array2::from_shape_fn((psi0.len(), 1), |(i, _)| psi0[i]);
    let (mut res, _) = propagate_unitary_columns(h0, drive, &cols, duration_ns, sample_times, opts)?;
    res.propagator = None;
    Ok(res)
}

/// Unitary propagation of a block of column states; also returns the final
/// lab-frame image of the columns.
pub fn propagate_unitary_columns(
    h0: &OperatorMatrix,
    drive: Option<DriveSpec<'_>>,
    columns: &Array2<C64>,
    duration_ns: f64,
    sample_times: &[f64],
    opts: &SimOptions,
) -> Result<(SimResult, Array2<C64>)> {
    let dim = h0.dim();
    let k = columns.ncols();
    let (system, env): (PhasedSystem, Option<&dyn Fn(f64) -> f64>) = match &drive {
        Some(d) => (
            PhasedSystem::new(h0, Some((d.operator, d.freq_mhz, d.frame)))?,
            Some(d.envelope),
        ),
        None => (PhasedSystem::new(h0, None)?, None),
    };

    let mut y: Vec<C64> = Vec::with_capacity(dim * k);
    for i in 0..dim {
        for j in 0..k {
            y.push(columns[[i, j]]);
        }
    }

    let mut times = Vec::new();
    let mut populations = Vec::new();
    let mut states = Vec::new();
    {
        let sys = &system;
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            let env_rad = env.map(|e| mhz_to_angular(e(t))).unwrap_or(0.0);
            sys.apply_rhs_columns(t, env_rad, y, dy, k);
        };
        let sampler = |t: f64, y: &[C64]| {
            times.push(t);
            let phases = sys.lab_phases(t);
            let mut pops = vec![0.0; dim];
            for i in 0..dim {
                for j in 0..k {
                    pops[i] += y[i * k + j].norm_sqr();
                }
            }
            populations.push(pops);
            if k == 1 {
                states.push(Array1::from_shape_fn(dim, |i| phases[i] * y[i]));
            }
        };
        rk::integrate(rhs, 0.0, duration_ns, &mut y, &opts.rk(sys, duration_ns), sample_times, sampler)?;
    }

    let phases = system.lab_phases(duration_ns);
    let final_cols = Array2::from_shape_fn((dim, k), |(i, j)| phases[i] * y[i * k + j]);
    if times.last().map_or(true, |&t| t < duration_ns - 1e-12) {
        times.push(duration_ns);
        let mut pops = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..k {
                pops[i] += final_cols[[i, j]].norm_sqr();
            }
        }
        populations.push(pops);
        if k == 1 {
            states.push(Array1::from_shape_fn(dim, |i| final_cols[[i, 0]]));
        }
    }
    Ok((
        SimResult { times, populations, states, densities: Vec::new(), propagator: Some(final_cols.clone()) },
        final_cols,
    ))
}

/// Deterministic master-equation propagation.
pub fn propagate_lindblad(
    h0: &OperatorMatrix,
    drive: Option<DriveSpec<'_>>,
    rho0: &Array2<C64>,
    jumps: &LindbladSpec,
    duration_ns: f64,
    sample_times: &[f64],
    opts: &SimOptions,
) -> Result<SimResult> {
    validate_density(rho0)?;
    propagate_lindblad_raw(h0, drive, rho0, jumps, duration_ns, sample_times, opts)
}

/// Master-equation propagation without the physical-state check; also
/// accepts non-Hermitian "densities" (basis elements of the channel map).
pub fn propagate_lindblad_raw(
    h0: &OperatorMatrix,
    drive: Option<DriveSpec<'_>>,
    rho0: &Array2<C64>,
    jumps: &LindbladSpec,
    duration_ns: f64,
    sample_times: &[f64],
    opts: &SimOptions,
) -> Result<SimResult> {
    let dim = h0.dim();
    if rho0.nrows() != dim {
        return Err(TipError::DimensionMismatch { expected: dim, got: rho0.nrows() });
    }
    let (system, env): (PhasedSystem, Option<&dyn Fn(f64) -> f64>) = match &drive {
        Some(d) => (
            PhasedSystem::new(h0, Some((d.operator, d.freq_mhz, d.frame)))?,
            Some(d.envelope),
        ),
        None => (PhasedSystem::new(h0, None)?, None),
    };
    let sparse_jumps = jumps.sparse(&system.frame_energies)?;

    let mut y: Vec<C64> = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            y.push(rho0[[i, j]]);
        }
    }

    let mut times = Vec::new();
    let mut populations = Vec::new();
    let mut densities = Vec::new();
    {
        let sys = &system;
        let jumps = &sparse_jumps;
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            dy.fill(C64::new(0.0, 0.0));
            let env_rad = env.map(|e| mhz_to_angular(e(t))).unwrap_or(0.0);
            sys.accumulate_commutator(t, env_rad, y, dy);
            for j in jumps {
                j.accumulate_dissipator(y, dy, sys.dim);
            }
        };
        let sampler = |t: f64, y: &[C64]| {
            times.push(t);
            let mut pops = vec![0.0; dim];
            for i in 0..dim {
                pops[i] = y[i * dim + i].re;
            }
            populations.push(pops);
            let phases = sys.lab_phases(t);
            densities.push(Array2::from_shape_fn((dim, dim), |(i, j)| {
                phases[i] * y[i * dim + j] * phases[j].conj()
            }));
        };
        rk::integrate(rhs, 0.0, duration_ns, &mut y, &opts.rk(sys, duration_ns), sample_times, sampler)?;
    }

    if times.last().map_or(true, |&t| t < duration_ns - 1e-12) {
        let phases = system.lab_phases(duration_ns);
        let final_rho = Array2::from_shape_fn((dim, dim), |(i, j)| {
            phases[i] * y[i * dim + j] * phases[j].conj()
        });
        times.push(duration_ns);
        let mut pops = vec![0.0; dim];
        for i in 0..dim {
            pops[i] = final_rho[[i, i]].re;
        }
        populations.push(pops);
        densities.push(final_rho);
    }

    Ok(SimResult { times, populations, states: Vec::new(), densities, propagator: None })
}

fn validate_density(rho: &Array2<C64>) -> Result<()> {
    if linalg::hermiticity_defect(rho) > 1e-10 {
        return Err(TipError::InvalidArgument("density matrix is not Hermitian".into()));
    }
    let trace: f64 = (0..rho.nrows()).map(|i| rho[[i, i]].re).sum();
    if (trace - 1.0).abs() > 1e-8 {
        return Err(TipError::InvalidArgument(format!("density trace {trace:.8} != 1")));
    }
    let eig = linalg::eigh(rho);
    if eig.values[0] < -1e-10 {
        return Err(TipError::InvalidArgument(format!(
            "density matrix has negative eigenvalue {:.3e}",
            eig.values[0]
        )));
    }
    Ok(())
}

/// Population map produced by a drive-frequency x duration chevron scan.
pub struct ChevronMap {
    pub freqs_mhz: Vec<f64>,
    pub times_ns: Vec<f64>,
    /// pop_data_e[f][t]: population of the data transmon (b) first excited
    /// state, marginalized over the rest.
    pub pop_data_e: Array2<f64>,
    /// pop_coupler_f[f][t]: population of the coupler second excited state.
    pub pop_coupler_f: Array2<f64>,
}

/// Sweep the drive frequency and record populations along the pulse. Each
/// frequency is one trajectory sampled at `times_ns` inside a pulse whose
/// flat top covers the scan window (rising edge included, falling edge not
/// simulated); durations are interpreted as in-pulse observation times.
pub fn chevron_scan(
    device: &DeviceModel,
    template: &TipPulse,
    freqs_mhz: &[f64],
    times_ns: &[f64],
    initial: BareLabel,
    opts: &SimOptions,
) -> Result<ChevronMap> {
    if freqs_mhz.is_empty() || times_ns.is_empty() {
        return Err(TipError::InvalidArgument("chevron grids must be nonempty".into()));
    }
    let h0 = build_static_hamiltonian(device);
    let dressed = crate::hilbert::dressed_state_map(&h0, device.levels());
    let drive_op = build_drive_operator(device, template.target);
    let t_max = times_ns.iter().cloned().fold(0.0, f64::max);
    let pulse = TipPulse {
        flat_top_ns: (t_max - template.edge_ns).max(0.0) + template.edge_ns,
        ..*template
    };
    let levels = device.levels();
    let dim = device.dim();

    let idx0 = initial.flatten(levels);
    let psi0 = dressed.vectors.column(idx0).to_owned();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = freqs_mhz
        .iter()
        .map(|&f| {
            let env = |t: f64| crate::gatedesign::pulse_envelope(t, &pulse);
            let drive = DriveSpec {
                operator: &drive_op,
                envelope: &env,
                freq_mhz: f,
                frame: DriveFrame::RotatingRwa,
            };
            let res = propagate_unitary(&h0, Some(drive), &psi0, t_max, times_ns, opts)?;
            let mut row_e = Vec::with_capacity(times_ns.len());
            let mut row_f = Vec::with_capacity(times_ns.len());
            for pops in &res.populations {
                let mut pe = 0.0;
                let mut pf = 0.0;
                for i in 0..dim {
                    let lab = BareLabel::from_flat(i, levels);
                    if lab.0[1] == 1 {
                        pe += pops[i];
                    }
                    if lab.0[2] == 2 {
                        pf += pops[i];
                    }
                }
                row_e.push(pe);
                row_f.push(pf);
            }
            Ok((row_e, row_f))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pop_data_e = Array2::zeros((freqs_mhz.len(), times_ns.len()));
    let mut pop_coupler_f = Array2::zeros((freqs_mhz.len(), times_ns.len()));
    for (fi, (re, rf)) in rows.into_iter().enumerate() {
        for (ti, v) in re.into_iter().enumerate() {
            pop_data_e[[fi, ti]] = v;
        }
        for (ti, v) in rf.into_iter().enumerate() {
            pop_coupler_f[[fi, ti]] = v;
        }
    }
    Ok(ChevronMap {
        freqs_mhz: freqs_mhz.to_vec(),
        times_ns: times_ns.to_vec(),
        pop_data_e,
        pop_coupler_f,
    })
}

/// Average gate fidelity of `actual` against `ideal` on a d-dimensional
/// computational subspace: (Tr[M'M] + |Tr M|^2) / (d(d+1)) with
/// M = ideal' actual.
pub fn average_gate_fidelity(actual: &Array2<C64>, ideal: &Array2<C64>) -> Result<f64> {
    let d = actual.nrows();
    if ideal.nrows() != d || actual.ncols() != d || ideal.ncols() != d {
        return Err(TipError::DimensionMismatch { expected: d, got: ideal.nrows() });
    }
    let m = linalg::matmul(&linalg::dagger(ideal), actual);
    let mtm: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let tr: C64 = (0..d).map(|i| m[[i, i]]).sum();
    Ok((mtm + tr.norm_sqr()) / (d * (d + 1)) as f64)
}

/// Sum of bare-label populations with the given occupation of one transmon.
pub fn marginal_population(pops: &[f64], levels: [usize; 3], which: usize, occ: usize) -> f64 {
    let mut acc = 0.0;
    for (i, p) in pops.iter().enumerate() {
        if BareLabel::from_flat(i, levels).0[which] == occ {
            acc += p;
        }
    }
    acc
}

pub fn angular(freq_mhz: f64) -> f64 {
    mhz_to_angular(freq_mhz)
}

pub const _TWO_PI: f64 = TWO_PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn two_level(omega_mhz: f64) -> OperatorMatrix {
        let mut h: Array2<C64> = Array2::zeros((2, 2));
        h[[1, 1]] = C64::new(mhz_to_angular(omega_mhz), 0.0);
        OperatorMatrix::new(h)
    }

    #[test]
    fn eigenstate_populations_are_constant_without_drive() {
        let dev = presets::table_device(3);
        let h0 = build_static_hamiltonian(&dev);
        let map = crate::hilbert::dressed_state_map(&h0, dev.levels());
        let idx = BareLabel([0, 1, 0]).flatten(dev.levels());
        let psi0 = map.vectors.column(idx).to_owned();
        let res = propagate_unitary(
            &h0,
            None,
            &psi0,
            200.0,
            &[50.0, 100.0, 200.0],
            &SimOptions::default(),
        )
        .unwrap();
        let p0: Vec<f64> = (0..dev.dim()).map(|i| psi0[i].norm_sqr()).collect();
        for pops in &res.populations {
            for i in 0..dev.dim() {
                assert!((pops[i] - p0[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resonant_rabi_matches_analytic() {
        let omega = 5000.0;
        let h0 = two_level(omega);
        let x = OperatorMatrix::new(Array2::from_shape_fn((2, 2), |(i, j)| {
            if i != j { linalg::ONE } else { linalg::ZERO }
        }));
        let amp = 20.0; // MHz
        let env = move |_t: f64| amp;
        let drive = DriveSpec { operator: &x, envelope: &env, freq_mhz: omega, frame: DriveFrame::RotatingRwa };
        let psi0 = Array1::from_vec(vec![linalg::ONE, linalg::ZERO]);
        let samples: Vec<f64> = (1..=20).map(|k| k as f64 * 2.5).collect();
        let res = propagate_unitary(&h0, Some(drive), &psi0, 50.0, &samples, &SimOptions::default()).unwrap();
        for (s, pops) in res.times.iter().zip(res.populations.iter()) {
            let phase = mhz_to_angular(amp) * s / 2.0;
            let expect = phase.sin().powi(2);
            assert!((pops[1] - expect).abs() < 1e-6, "t={s} got {} want {}", pops[1], expect);
        }
    }

    #[test]
    fn norm_preserved_under_strong_drive() {
        let dev = presets::table_device(3);
        let h0 = build_static_hamiltonian(&dev);
        let drive_op = build_drive_operator(&dev, TransmonId::C);
        let env = |_t: f64| 150.0;
        let dim = dev.dim();
        let mut psi0: Array1<C64> = Array1::zeros(dim);
        psi0[BareLabel([0, 1, 0]).flatten(dev.levels())] = linalg::ONE;

        let drive = DriveSpec { operator: &drive_op, envelope: &env, freq_mhz: 6200.0, frame: DriveFrame::RotatingRwa };
        let res = propagate_unitary(&h0, Some(drive), &psi0, 60.0, &[15.0, 30.0, 45.0, 60.0], &SimOptions::default()).unwrap();
        for pops in &res.populations {
            let n: f64 = pops.iter().sum();
            assert!((n - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        let dev = presets::table_device(3);
        let h0 = build_static_hamiltonian(&dev);
        let dim = dev.dim();
        let i0 = BareLabel([0, 1, 0]).flatten(dev.levels());
        let i1 = BareLabel([0, 0, 1]).flatten(dev.levels());
        let mut psi0: Array1<C64> = Array1::zeros(dim);
        psi0[i0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi0[i1] = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);

        let psi_t = {
            // final lab-frame state from the propagator column
            let cols = propagate_unitary_columns(
                &h0,
                None,
                &Array2::from_shape_fn((dim, 1), |(i, _)| psi0[i]),
                150.0,
                &[],
                &SimOptions::default(),
            )
            .unwrap()
            .1;
            Array1::from_shape_fn(dim, |i| cols[[i, 0]])
        };
        let h0_neg = OperatorMatrix::new(h0.matrix.mapv(|z| -z));
        let back = propagate_unitary_columns(
            &h0_neg,
            None,
            &Array2::from_shape_fn((dim, 1), |(i, _)| psi_t[i]),
            150.0,
            &[],
            &SimOptions::default(),
        )
        .unwrap()
        .1;
        let mut err = 0.0;
        for i in 0..dim {
            err += (back[[i, 0]] - psi0[i]).norm_sqr();
        }
        assert!(err.sqrt() < 1e-7, "reversal error {}", err.sqrt());
    }

    #[test]
    fn lindblad_pure_relaxation_decays_exponentially() {
        let h0 = OperatorMatrix::new(Array2::zeros((2, 2)));
        let mut op: Array2<C64> = Array2::zeros((2, 2));
        op[[0, 1]] = linalg::ONE;
        let mut jumps = LindbladSpec::empty();
        let gamma = 0.02; // 1/us
        jumps.push(OperatorMatrix::new(op), gamma).unwrap();
        let mut rho0: Array2<C64> = Array2::zeros((2, 2));
        rho0[[1, 1]] = linalg::ONE;
        let res = propagate_lindblad(&h0, None, &rho0, &jumps, 5000.0, &[1000.0, 3000.0, 5000.0], &SimOptions::default()).unwrap();
        for (t, pops) in res.times.iter().zip(res.populations.iter()) {
            let expect = (-gamma * t * 1e-3).exp();
            assert!((pops[1] - expect).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn lindblad_dephasing_coherence_decay() {
        // jump sqrt(2 Gphi)|e><e| makes <g|rho|e> decay at Gphi
        let h0 = OperatorMatrix::new(Array2::zeros((2, 2)));
        let mut op: Array2<C64> = Array2::zeros((2, 2));
        op[[1, 1]] = C64::new(2f64.sqrt(), 0.0);
        let gphi = 0.05;
        let mut jumps = LindbladSpec::empty();
        jumps.push(OperatorMatrix::new(op), gphi).unwrap();
        let rho0 = Array2::from_shape_fn((2, 2), |_| C64::new(0.5, 0.0));
        let res = propagate_lindblad(&h0, None, &rho0, &jumps, 2000.0, &[500.0, 1000.0, 2000.0], &SimOptions::default()).unwrap();
        for (t, rho) in res.times.iter().zip(res.densities.iter()) {
            let expect = 0.5 * (-gphi * t * 1e-3).exp();
            assert!((rho[[0, 1]].re - expect).abs() < 1e-8, "t={t}");
            assert!((rho[[0, 0]].re - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn lindblad_zero_rates_matches_unitary() {
        let dev = presets::table_device(3);
        let h0 = build_static_hamiltonian(&dev);
        let drive_op = build_drive_operator(&dev, TransmonId::C);
        let env = |_t: f64| 120.0;
        let dim = dev.dim();
        let start = BareLabel([0, 1, 0]).flatten(dev.levels());
        let mut psi0: Array1<C64> = Array1::zeros(dim);
        psi0[start] = linalg::ONE;
        let mut rho0: Array2<C64> = Array2::zeros((dim, dim));
        rho0[[start, start]] = linalg::ONE;

        let mk = || DriveSpec { operator: &drive_op, envelope: &env, freq_mhz: 6195.0, frame: DriveFrame::RotatingRwa };
        let ru = propagate_unitary(&h0, Some(mk()), &psi0, 80.0, &[80.0], &SimOptions::default()).unwrap();
        let rl = propagate_lindblad(&h0, Some(mk()), &rho0, &LindbladSpec::empty(), 80.0, &[], &SimOptions::with_rtol(1e-9)).unwrap();
        let pu = ru.populations.last().unwrap();
        let pl = rl.populations.last().unwrap();
        for i in 0..dim {
            assert!((pu[i] - pl[i]).abs() < 1e-7, "label {i}: {} vs {}", pu[i], pl[i]);
        }
        // trace preserved, state physical
        let tr: f64 = pl.iter().sum();
        assert!((tr - 1.0).abs() < 1e-8);
        let eig = linalg::eigh(rl.densities.last().unwrap());
        assert!(eig.values[0] > -1e-8);
    }

    #[test]
    fn average_gate_fidelity_basics() {
        let cz = Array2::from_diag(&Array1::from_vec(vec![
            linalg::ONE,
            linalg::ONE,
            linalg::ONE,
            -linalg::ONE,
        ]));
        assert!((average_gate_fidelity(&cz, &cz).unwrap() - 1.0).abs() < 1e-14);
        let phased = cz.mapv(|z| z * C64::from_polar(1.0, 0.7));
        assert!((average_gate_fidelity(&phased, &cz).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn average_gate_fidelity_driven_zz_expansion() {
        // X_pi gate with a parasitic Z shift: F = 1 - (8/3) eps^2 + O(eps^4)
        let t_g = 50.0;
        let omega_x = std::f64::consts::PI / t_g;
        let eps = 1e-3;
        let xi = eps * omega_x;
        let mk = |with_z: bool| {
            let mut h: Array2<C64> = Array2::zeros((2, 2));
            h[[0, 1]] = C64::new(omega_x / 2.0, 0.0);
            h[[1, 0]] = C64::new(omega_x / 2.0, 0.0);
            if with_z {
                h[[0, 0]] = C64::new(xi, 0.0);
                h[[1, 1]] = C64::new(-xi, 0.0);
            }
            linalg::expi_hermitian(&h, -t_g)
        };
        let f = average_gate_fidelity(&mk(true), &mk(false)).unwrap();
        let expect = 1.0 - 8.0 / 3.0 * eps * eps;
        assert!(((1.0 - f) / (1.0 - expect) - 1.0).abs() < 1e-3, "F = {f}");
    }

    #[test]
    fn lab_frame_and_rwa_agree_for_weak_drive() {
        // two-level resonant Rabi with amp/freq < 0.05
        let omega = 3000.0;
        let h0 = two_level(omega);
        let x = OperatorMatrix::new(Array2::from_shape_fn((2, 2), |(i, j)| {
            if i != j { linalg::ONE } else { linalg::ZERO }
        }));
        let amp = 40.0;
        let env = move |_t: f64| amp;
        let psi0 = Array1::from_vec(vec![linalg::ONE, linalg::ZERO]);
        let run = |frame| {
            let drive = DriveSpec { operator: &x, envelope: &env, freq_mhz: omega, frame };
            propagate_unitary(&h0, Some(drive), &psi0, 12.5, &[], &SimOptions::default())
                .unwrap()
                .populations
                .last()
                .unwrap()
                .clone()
        };
        let rwa = run(DriveFrame::RotatingRwa);
        let lab = run(DriveFrame::Lab);
        assert!((rwa[1] - lab[1]).abs() < 1e-3, "rwa {} lab {}", rwa[1], lab[1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let h0 = two_level(1000.0);
        let psi_bad = Array1::from_vec(vec![C64::new(0.5, 0.0), linalg::ZERO]);
        assert!(propagate_unitary(&h0, None, &psi_bad, 1.0, &[], &SimOptions::default()).is_err());

        let mut rho_bad: Array2<C64> = Array2::zeros((2, 2));
        rho_bad[[0, 0]] = C64::new(0.7, 0.0);
        assert!(matches!(
            propagate_lindblad(&h0, None, &rho_bad, &LindbladSpec::empty(), 1.0, &[], &SimOptions::default()),
            Err(TipError::InvalidArgument(_))
        ));
    }
}
