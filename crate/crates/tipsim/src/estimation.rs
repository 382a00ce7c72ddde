//! Curve fitting and measurement-model utilities: damped-cosine and
//! exponential-decay fits with standard errors, linear fits, residual-ZZ
//! extraction from echo-amplified Ramsey scans, readout assignment
//! matrices, and the coupler e-f Hahn-echo master-equation fit.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TipError};
use crate::linalg::{self, C64};

/// Generic nonlinear-fit outcome. Parameter meaning is documented by the
/// producing function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// 1-sigma standard errors from the Jacobian at the optimum.
    pub errors: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    /// Set when the model is locally unidentifiable (flat directions).
    pub degenerate: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.values[i], self.errors[i]))
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt style) least squares.
/// `model` fills residuals r(p) and the Jacobian dr/dp.
fn levenberg_marquardt<F>(
    mut params: Vec<f64>,
    mut model: F,
    max_iter: usize,
) -> (Vec<f64>, Vec<f64>, f64, bool)
where
    F: FnMut(&[f64], &mut Vec<f64>, &mut Vec<Vec<f64>>),
{
    let np = params.len();
    let mut resid = Vec::new();
    let mut jac: Vec<Vec<f64>> = Vec::new();
    model(&params, &mut resid, &mut jac);
    let mut cost: f64 = resid.iter().map(|r| r * r).sum();
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..max_iter {
        // normal equations J'J + lambda diag(J'J)
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (k, r) in resid.iter().enumerate() {
            for i in 0..np {
                jtr[i] += jac[k][i] * r;
                for j in 0..np {
                    jtj[i][j] += jac[k][i] * jac[k][j];
                }
            }
        }
        let mut damped = jtj.clone();
        for i in 0..np {
            damped[i][i] += lambda * jtj[i][i].max(1e-12);
        }
        let step = match linalg::solve_real(&damped, &jtr) {
            Some(s) => s,
            None => break,
        };
        let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p - s).collect();
        let mut trial_resid = Vec::new();
        let mut trial_jac = Vec::new();
        model(&trial, &mut trial_resid, &mut trial_jac);
        let trial_cost: f64 = trial_resid.iter().map(|r| r * r).sum();

        if trial_cost <= cost {
            let rel = (cost - trial_cost) / cost.max(1e-300);
            let step_small = step
                .iter()
                .zip(&params)
                .all(|(s, p)| s.abs() <= 1e-10 * p.abs().max(1.0));
            params = trial;
            resid = trial_resid;
            jac = trial_jac;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-14 || step_small {
                converged = true;
                break;
            }
        } else {
            lambda *= 8.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (params, resid, cost, converged)
}

/// Standard errors via sigma^2 (J'J)^-1 at the optimum.
fn standard_errors(jac: &[Vec<f64>], resid: &[f64], np: usize) -> (Vec<f64>, bool) {
    let dof = resid.len().saturating_sub(np).max(1) as f64;
    let s2: f64 = resid.iter().map(|r| r * r).sum::<f64>() / dof;
    let mut jtj = vec![vec![0.0; np]; np];
    for row in jac {
        for i in 0..np {
            for j in 0..np {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    match linalg::invert_real(&jtj) {
        Some(inv) => {
            let errs = (0..np).map(|i| (s2 * inv[i][i].max(0.0)).sqrt()).collect();
            (errs, false)
        }
        None => (vec![f64::INFINITY; np], true),
    }
}

fn rebuild_jacobian<F>(params: &[f64], mut model: F) -> (Vec<f64>, Vec<Vec<f64>>)
where
    F: FnMut(&[f64], &mut Vec<f64>, &mut Vec<Vec<f64>>),
{
    let mut r = Vec::new();
    let mut j = Vec::new();
    model(params, &mut r, &mut j);
    (r, j)
}

/// Dominant nonzero frequency of a uniformly resampled trace, MHz, via a
/// direct discrete Fourier transform.
fn dominant_frequency_mhz(t_ns: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t_ns[n - 1] - t_ns[0];
    if span <= 0.0 {
        return 0.0;
    }
    // resample onto a uniform grid by nearest sample (grids here are near
    // uniform already)
    let m = n.next_power_of_two().max(64);
    let dt = span / (m - 1) as f64;
    let mut best = (0.0f64, 0.0f64);
    for k in 1..m / 2 {
        let f_cyc_per_ns = k as f64 / (m as f64 * dt);
        let mut acc = C64::new(0.0, 0.0);
        for (i, &ti) in t_ns.iter().enumerate() {
            let ph = -linalg::I * C64::new(2.0 * std::f64::consts::PI * f_cyc_per_ns * (ti - t_ns[0]), 0.0);
            acc += C64::new(y[i] - mean, 0.0) * ph.exp();
        }
        let p = acc.norm_sqr();
        if p > best.1 {
            best = (f_cyc_per_ns * 1e3, p);
        }
    }
    best.0
}

/// Fit y = A exp(-t/tau) cos(2 pi f t + phi) + B.
/// Times in ns; returns f in MHz, tau in us.
pub fn fit_decaying_cosine(t_ns: &[f64], y: &[f64]) -> Result<FitResult> {
    let n = y.len();
    if n < 8 {
        return Err(TipError::InsufficientData(format!(
            "damped-cosine fit needs >= 8 samples, got {n}"
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var < 1e-24 {
        return Err(TipError::InvalidArgument(
            "constant trace: no oscillation to fit".into(),
        ));
    }

    let f0 = dominant_frequency_mhz(t_ns, y);
    if f0 <= 0.0 {
        return Err(TipError::InsufficientData(
            "no nonzero spectral peak; trace spans less than one period".into(),
        ));
    }

    // linear least squares for amplitude/phase/offset at fixed frequency
    let w0 = 2.0 * std::f64::consts::PI * f0 * 1e-3;
    let mut m = vec![vec![0.0; 3]; 3];
    let mut rhs = vec![0.0; 3];
    for (i, &ti) in t_ns.iter().enumerate() {
        let basis = [(w0 * ti).cos(), (w0 * ti).sin(), 1.0];
        for a in 0..3 {
            rhs[a] += basis[a] * y[i];
            for b in 0..3 {
                m[a][b] += basis[a] * basis[b];
            }
        }
    }
    let cs = linalg::solve_real(&m, &rhs).unwrap_or(vec![var.sqrt(), 0.0, mean]);
    let a0 = (cs[0] * cs[0] + cs[1] * cs[1]).sqrt().max(1e-9);
    let phi0 = (-cs[1]).atan2(cs[0]);
    let span_ns = t_ns[n - 1] - t_ns[0];
    let tau0_us = span_ns * 2e-3; // start weakly damped

    let model = |p: &[f64], resid: &mut Vec<f64>, jac: &mut Vec<Vec<f64>>| {
        let (a, f, tau_us, phi, b) = (p[0], p[1], p[2], p[3], p[4]);
        resid.clear();
        jac.clear();
        for (i, &ti) in t_ns.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * f * 1e-3;
            let damp = (-ti / (tau_us * 1e3)).exp();
            let osc = (w * ti + phi).cos();
            let model_y = a * damp * osc + b;
            resid.push(model_y - y[i]);
            let dosc = -(w * ti + phi).sin();
            jac.push(vec![
                damp * osc,
                a * damp * dosc * 2.0 * std::f64::consts::PI * 1e-3 * ti,
                a * damp * osc * ti / (tau_us * tau_us * 1e3),
                a * damp * dosc,
                1.0,
            ]);
        }
    };

    let (params, _, cost, converged) =
        levenberg_marquardt(vec![a0, f0, tau0_us, phi0, mean], model, 200);
    let (resid, jac) = rebuild_jacobian(&params, model);
    let (errors, degenerate) = standard_errors(&jac, &resid, 5);

    Ok(FitResult {
        names: vec!["amplitude".into(), "freq_mhz".into(), "decay_us".into(), "phase".into(), "offset".into()],
        values: params,
        errors,
        residual_norm: cost.sqrt(),
        converged,
        degenerate,
    })
}

/// Fit y = A lambda^m + B with lambda in (0, 1], for integer depths m.
/// lambda is constrained by an internal logistic transform.
pub fn fit_exponential_decay(m: &[f64], y: &[f64]) -> Result<FitResult> {
    let distinct = {
        let mut v: Vec<f64> = m.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        v.len()
    };
    if distinct < 4 {
        return Err(TipError::InsufficientData(format!(
            "exponential-decay fit needs >= 4 distinct depths, got {distinct}"
        )));
    }

    // crude initial decade estimate from endpoint ratio
    let y0 = y[0];
    let yn = y[y.len() - 1];
    let b0 = yn.min(y0) * 0.5;
    let a0 = (y0 - b0).max(1e-6);
    let lam0 = (((yn - b0).max(1e-9) / a0).powf(1.0 / m[m.len() - 1].max(1.0))).clamp(0.05, 0.999);
    let u0 = (lam0 / (1.0 - lam0)).ln();

    let model = |p: &[f64], resid: &mut Vec<f64>, jac: &mut Vec<Vec<f64>>| {
        let (a, u, b) = (p[0], p[1], p[2]);
        let lam = 1.0 / (1.0 + (-u).exp());
        let dlam_du = lam * (1.0 - lam);
        resid.clear();
        jac.clear();
        for (i, &mi) in m.iter().enumerate() {
            let lm = lam.powf(mi);
            resid.push(a * lm + b - y[i]);
            let dl = if lam > 0.0 { a * mi * lam.powf(mi - 1.0) } else { 0.0 };
            jac.push(vec![lm, dl * dlam_du, 1.0]);
        }
    };

    let (params, _, cost, converged) = levenberg_marquardt(vec![a0, u0, b0], model, 200);
    let (resid, jac) = rebuild_jacobian(&params, model);
    let (errs_int, mut degenerate) = standard_errors(&jac, &resid, 3);

    let lam = 1.0 / (1.0 + (-params[1]).exp());
    let dlam = lam * (1.0 - lam);
    let lam_err = errs_int[1] * dlam;
    // A and B are jointly unidentifiable when there is no decay
    if lam > 1.0 - 1e-6 {
        degenerate = true;
    }

    Ok(FitResult {
        names: vec!["amplitude".into(), "lambda".into(), "offset".into()],
        values: vec![params[0], lam, params[2]],
        errors: vec![errs_int[0], lam_err, errs_int[2]],
        residual_norm: cost.sqrt(),
        converged,
        degenerate,
    })
}

/// Weighted straight-line fit y = a + b x; returns (a, b, var_a, var_b, cov_ab).
pub fn fit_line(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<(f64, f64, f64, f64, f64)> {
    if x.len() < 2 {
        return Err(TipError::InsufficientData("line fit needs >= 2 points".into()));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / (v * v).max(1e-300)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
    let swy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let swxx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi * xi).sum();
    let swxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (xi, yi))| wi * xi * yi)
        .sum();
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return Err(TipError::InsufficientData("degenerate abscissa in line fit".into()));
    }
    let a = (swxx * swy - swx * swxy) / det;
    let b = (sw * swxy - swx * swy) / det;

    let (var_a, var_b, cov) = if sigma.is_some() {
        (swxx / det, sw / det, -swx / det)
    } else {
        // scale by residual variance when no uncertainties were supplied
        let dof = (x.len() as f64 - 2.0).max(1.0);
        let s2: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (yi - a - b * xi).powi(2))
            .sum::<f64>()
            / dof;
        (s2 * swxx / det, s2 * sw / det, -s2 * swx / det)
    };
    Ok((a, b, var_a, var_b, cov))
}

/// One echo-amplified Ramsey branch point: artificial detuning (MHz),
/// fitted oscillation frequency (MHz), and the branch slope sign.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JazzPoint {
    pub omega_m_mhz: f64,
    pub osc_freq_mhz: f64,
    pub positive_branch: bool,
}

/// Extract the residual ZZ rate (kHz) from the intersection of the two
/// linear branches |omega_m + xi|. When scans with swapped target/control
/// roles are supplied, the estimates are averaged.
pub fn jazz_extract_zz(scans: &[Vec<JazzPoint>]) -> Result<(f64, f64)> {
    if scans.is_empty() {
        return Err(TipError::InsufficientData("no scans supplied".into()));
    }
    let mut estimates = Vec::new();
    let mut variances = Vec::new();
    for scan in scans {
        let pos: Vec<&JazzPoint> = scan.iter().filter(|p| p.positive_branch).collect();
        let neg: Vec<&JazzPoint> = scan.iter().filter(|p| !p.positive_branch).collect();
        if pos.len() < 2 || neg.len() < 2 {
            return Err(TipError::InsufficientData(
                "both branches need >= 2 points for the intersection".into(),
            ));
        }
        let fit = |pts: &[&JazzPoint]| {
            let x: Vec<f64> = pts.iter().map(|p| p.omega_m_mhz).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.osc_freq_mhz).collect();
            fit_line(&x, &y, None)
        };
        let (a1, b1, va1, vb1, c1) = fit(&pos)?;
        let (a2, b2, va2, vb2, c2) = fit(&neg)?;
        if (b1 - b2).abs() < 1e-9 {
            return Err(TipError::InsufficientData("branches are parallel".into()));
        }
        // intersection abscissa = -xi
        let x_star = (a2 - a1) / (b1 - b2);
        let xi_mhz = -x_star;
        // first-order propagation through the intersection formula
        let d = b1 - b2;
        let dxda1 = 1.0 / d;
        let dxda2 = -1.0 / d;
        let dxdb1 = -x_star / d;
        let dxdb2 = x_star / d;
        let var = dxda1 * dxda1 * va1
            + dxda2 * dxda2 * va2
            + dxdb1 * dxdb1 * vb1
            + dxdb2 * dxdb2 * vb2
            + 2.0 * (dxda1 * dxdb1 * c1 + dxda2 * dxdb2 * c2);
        estimates.push(xi_mhz * 1e3);
        variances.push(var.max(0.0) * 1e6);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = variances.iter().sum::<f64>() / (n * n);
    Ok((mean, var.sqrt()))
}

/// Row-stochastic readout confusion model for one transmon.
/// `probs[m][n]` is the probability of reporting m given true state n, so
/// each column sums to one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub probs: [[f64; 3]; 3],
}

impl AssignmentMatrix {
    pub fn identity() -> Self {
        let mut probs = [[0.0; 3]; 3];
        for (i, row) in probs.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { probs }
    }

    /// Build from rows indexed by the prepared (true) state, the layout
    /// used in readout-characterization tables.
    pub fn from_target_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let mut probs = [[0.0; 3]; 3];
        for (n, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(TipError::InvalidArgument(format!(
                    "assignment row for true state {n} sums to {sum:.6}, not 1"
                )));
            }
            for (m, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(TipError::InvalidArgument(format!(
                        "assignment probability {p} outside [0, 1]"
                    )));
                }
                probs[m][n] = p;
            }
        }
        Ok(Self { probs })
    }

    /// P(report m | true n).
    pub fn prob(&self, report: usize, truth: usize) -> f64 {
        self.probs[report][truth]
    }
}

/// Map true three-level populations through the confusion matrix.
pub fn apply_assignment(true_pops: [f64; 3], m: &AssignmentMatrix) -> Result<[f64; 3]> {
    let sum: f64 = true_pops.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || true_pops.iter().any(|p| *p < -1e-12) {
        return Err(TipError::InvalidArgument(format!(
            "input populations must form a distribution (sum {sum:.9})"
        )));
    }
    let mut out = [0.0; 3];
    for r in 0..3 {
        for t in 0..3 {
            out[r] += m.probs[r][t] * true_pops[t];
        }
    }
    Ok(out)
}

/// Superoperator (row-major vec) of a dissipator-only three-level master
/// equation with jump rates in 1/ns.
fn qutrit_liouvillian(g1: f64, g1f: f64, gphif: f64) -> Array2<C64> {
    let mut liou: Array2<C64> = Array2::zeros((9, 9));
    let mut jumps: Vec<(Array2<C64>, f64)> = Vec::new();
    let mut l1: Array2<C64> = Array2::zeros((3, 3));
    l1[[0, 1]] = linalg::ONE;
    jumps.push((l1, g1));
    let mut l1f: Array2<C64> = Array2::zeros((3, 3));
    l1f[[1, 2]] = linalg::ONE;
    jumps.push((l1f, g1f));
    let mut lpf: Array2<C64> = Array2::zeros((3, 3));
    lpf[[2, 2]] = C64::new(2f64.sqrt(), 0.0);
    jumps.push((lpf, gphif));

    for (l, rate) in &jumps {
        if *rate == 0.0 {
            continue;
        }
        let n = linalg::matmul(&linalg::dagger(l), l);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for q in 0..3 {
                        let v = l[[i, k]] * l[[j, q]].conj() * *rate;
                        if v.norm() > 0.0 {
                            liou[[i * 3 + j, k * 3 + q]] += v;
                        }
                    }
                    let va = n[[i, k]] * 0.5 * *rate;
                    if va.norm() > 0.0 {
                        liou[[i * 3 + j, k * 3 + j]] -= va;
                    }
                    let vb = n[[k, j]] * 0.5 * *rate;
                    if vb.norm() > 0.0 {
                        liou[[i * 3 + j, i * 3 + k]] -= vb;
                    }
                }
            }
        }
    }
    liou
}

fn conjugate_superop(rho: &Array2<C64>, u: &Array2<C64>) -> Array2<C64> {
    linalg::matmul(u, &linalg::matmul(rho, &linalg::dagger(u)))
}

fn apply_vec_superop(s: &Array2<C64>, rho: &Array2<C64>) -> Array2<C64> {
    let mut v = Array1::zeros(9);
    for i in 0..3 {
        for j in 0..3 {
            v[i * 3 + j] = rho[[i, j]];
        }
    }
    let w = linalg::matvec(s, &v);
    Array2::from_shape_fn((3, 3), |(i, j)| w[i * 3 + j])
}

/// Forward model of the e-f Hahn echo on a three-level transmon: ideal
/// pulses, master-equation idles with relaxation and e-f dephasing, readout
/// through the confusion matrix. Returns reported g/e/f populations per
/// total idle time.
pub fn hahn_echo_ef_forward(
    tau_us: &[f64],
    t1_us: f64,
    t1f_us: f64,
    tphif_us: f64,
    m: &AssignmentMatrix,
) -> Vec<[f64; 3]> {
    let liou = qutrit_liouvillian(1e-3 / t1_us, 1e-3 / t1f_us, if tphif_us.is_finite() && tphif_us > 0.0 { 1e-3 / tphif_us } else { 0.0 });

    let mut xpi: Array2<C64> = Array2::zeros((3, 3));
    xpi[[0, 1]] = -linalg::I;
    xpi[[1, 0]] = -linalg::I;
    xpi[[2, 2]] = linalg::ONE;
    let mut xpif: Array2<C64> = Array2::zeros((3, 3));
    xpif[[0, 0]] = linalg::ONE;
    xpif[[1, 2]] = -linalg::I;
    xpif[[2, 1]] = -linalg::I;
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let mut xhalf_f: Array2<C64> = Array2::zeros((3, 3));
    xhalf_f[[0, 0]] = linalg::ONE;
    xhalf_f[[1, 1]] = C64::new(inv, 0.0);
    xhalf_f[[2, 2]] = C64::new(inv, 0.0);
    xhalf_f[[1, 2]] = -linalg::I * C64::new(inv, 0.0);
    xhalf_f[[2, 1]] = -linalg::I * C64::new(inv, 0.0);

    tau_us
        .iter()
        .map(|&tau| {
            let half = linalg::expm(&liou.mapv(|z| z * C64::new(tau * 0.5e3, 0.0)));
            let mut rho: Array2<C64> = Array2::zeros((3, 3));
            rho[[0, 0]] = linalg::ONE;
            rho = conjugate_superop(&rho, &xpi);
            rho = conjugate_superop(&rho, &xhalf_f);
            rho = apply_vec_superop(&half, &rho);
            rho = conjugate_superop(&rho, &xpif);
            rho = apply_vec_superop(&half, &rho);
            rho = conjugate_superop(&rho, &xhalf_f);
            let true_pops = [rho[[0, 0]].re, rho[[1, 1]].re, rho[[2, 2]].re];
            let mut out = [0.0; 3];
            for r in 0..3 {
                for t in 0..3 {
                    out[r] += m.probs[r][t] * true_pops[t];
                }
            }
            out
        })
        .collect()
}

/// Options for [`hahn_echo_ef_fit`].
pub struct HahnEchoFitOptions {
    /// Ratio T1f / T1 from an independent measurement pair.
    pub c0: f64,
    /// Fit the six free assignment entries (false pins the matrix to the
    /// identity, leaving two free parameters).
    pub fit_assignment: bool,
}

/// Fit T1 and the e-f pure-dephasing time from echo population traces.
/// Returns T1 (us), Tphif (us), the derived T2f, and (optionally) the
/// fitted confusion entries. The fit is flagged degenerate when the
/// dephasing time is unbounded by the scan window.
pub fn hahn_echo_ef_fit(
    tau_us: &[f64],
    observed: &[[f64; 3]],
    opts: &HahnEchoFitOptions,
) -> Result<FitResult> {
    if tau_us.len() != observed.len() || tau_us.len() < 4 {
        return Err(TipError::InsufficientData(
            "echo fit needs matching traces with >= 4 idle times".into(),
        ));
    }
    let span = tau_us.iter().cloned().fold(0.0, f64::max);
    let c0 = opts.c0;

    // parameters: ln T1, ln Tphif, then 6 assignment logits (softmax per
    // true-state row of the target table, i.e. per confusion column)
    let np = if opts.fit_assignment { 8 } else { 2 };
    let unpack = |p: &[f64]| -> (f64, f64, AssignmentMatrix) {
        let t1 = p[0].exp();
        let tphif = p[1].exp();
        let m = if opts.fit_assignment {
            let mut probs = [[0.0; 3]; 3];
            for truth in 0..3 {
                let (u1, u2) = (p[2 + 2 * truth], p[3 + 2 * truth]);
                let mut row = [u1.exp(), u2.exp(), 1.0];
                // diagonal-dominant gauge: the unit entry is the diagonal
                row.swap(2, truth);
                let s: f64 = row.iter().sum();
                for r in 0..3 {
                    probs[r][truth] = row[r] / s;
                }
            }
            AssignmentMatrix { probs }
        } else {
            AssignmentMatrix::identity()
        };
        (t1, tphif, m)
    };

    let residual = |p: &[f64]| -> Vec<f64> {
        let (t1, tphif, m) = unpack(p);
        let model = hahn_echo_ef_forward(tau_us, t1, c0 * t1, tphif, &m);
        let mut r = Vec::with_capacity(tau_us.len() * 3);
        for (mi, oi) in model.iter().zip(observed) {
            for k in 0..3 {
                r.push(mi[k] - oi[k]);
            }
        }
        r
    };

    let mut p0 = vec![(span.max(1.0) * 0.8).ln(), (span.max(1.0) * 0.5).ln()];
    if opts.fit_assignment {
        p0.extend_from_slice(&[-3.0, -3.0, -3.0, -3.0, -3.0, -3.0]);
    }

    let model = |p: &[f64], resid: &mut Vec<f64>, jac: &mut Vec<Vec<f64>>| {
        *resid = residual(p);
        jac.clear();
        let base = resid.clone();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(np);
        for k in 0..np {
            let h = 1e-5 * p[k].abs().max(1e-3);
            let mut pp = p.to_vec();
            pp[k] += h;
            let rp = residual(&pp);
            cols.push(rp.iter().zip(&base).map(|(a, b)| (a - b) / h).collect());
        }
        for row in 0..base.len() {
            jac.push((0..np).map(|k| cols[k][row]).collect());
        }
    };

    let (params, _, cost, converged) = levenberg_marquardt(p0, model, 200);
    let (resid, jac) = rebuild_jacobian(&params, model);
    let (errs, mut degenerate) = standard_errors(&jac, &resid, np);

    let (t1, tphif, mfit) = unpack(&params);
    let g1f = 1.0 / (c0 * t1);
    let gphif = 1.0 / tphif;
    let t2f = 1.0 / (gphif + 0.5 * g1f);
    if tphif > 10.0 * span {
        degenerate = true;
    }

    let mut names = vec!["t1_us".into(), "tphif_us".into(), "t2f_us".into()];
    let mut values = vec![t1, tphif, t2f];
    let mut errors = vec![errs[0] * t1, errs[1] * tphif, f64::NAN];
    if opts.fit_assignment {
        for truth in 0..3 {
            for rep in 0..3 {
                names.push(format!("m_{rep}{truth}"));
                values.push(mfit.probs[rep][truth]);
                errors.push(f64::NAN);
            }
        }
    }
    Ok(FitResult {
        names,
        values,
        errors,
        residual_norm: cost.sqrt(),
        converged,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synth_cosine(f_mhz: f64, tau_us: f64, n: usize, dt_ns: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt_ns).collect();
        let y = t
            .iter()
            .map(|&ti| {
                0.45 * (-ti / (tau_us * 1e3)).exp()
                    * (2.0 * std::f64::consts::PI * f_mhz * 1e-3 * ti + 0.4).cos()
                    + 0.5
            })
            .collect();
        (t, y)
    }

    #[test]
    fn decaying_cosine_round_trip() {
        let (t, y) = synth_cosine(5.0, 10.0, 240, 2.5);
        let fit = fit_decaying_cosine(&t, &y).unwrap();
        assert!(fit.converged);
        let (f, _) = fit.get("freq_mhz").unwrap();
        assert!((f - 5.0).abs() < 1e-6, "freq {f}");
        let (tau, _) = fit.get("decay_us").unwrap();
        assert!((tau - 10.0).abs() / 10.0 < 1e-4, "tau {tau}");
    }

    #[test]
    fn decaying_cosine_rejects_constant_data() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let y = vec![0.7; 50];
        assert!(fit_decaying_cosine(&t, &y).is_err());
    }

    #[test]
    fn decaying_cosine_coverage_under_noise() {
        // 100 seeded noisy traces; the fitted frequency should sit within
        // 3 reported standard errors at least 95 times.
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (t, mut y) = synth_cosine(5.0, 10.0, 201, 3.0);
            for v in y.iter_mut() {
                *v += 0.02 * rng.sample::<f64, _>(rand_distr_standard_normal());
            }
            let fit = match fit_decaying_cosine(&t, &y) {
                Ok(f) if f.converged => f,
                _ => continue,
            };
            let (f, se) = fit.get("freq_mhz").unwrap();
            if (f - 5.0).abs() <= 3.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= 95, "coverage {hits}/100");
    }

    // Box-Muller standard normal without extra dependencies.
    struct StdNormal;
    impl rand::distributions::Distribution<f64> for StdNormal {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
    }
    fn rand_distr_standard_normal() -> StdNormal {
        StdNormal
    }

    #[test]
    fn exponential_decay_round_trip() {
        let m: Vec<f64> = [1.0, 3.0, 6.0, 12.0, 25.0, 50.0, 100.0, 200.0].to_vec();
        let y: Vec<f64> = m.iter().map(|&mi| 0.5 * 0.97f64.powf(mi) + 0.25).collect();
        let fit = fit_exponential_decay(&m, &y).unwrap();
        assert!(fit.converged);
        let (a, _) = fit.get("amplitude").unwrap();
        let (lam, _) = fit.get("lambda").unwrap();
        let (b, _) = fit.get("offset").unwrap();
        assert!((a - 0.5).abs() < 1e-8, "a {a}");
        assert!((lam - 0.97).abs() < 1e-8, "lambda {lam}");
        assert!((b - 0.25).abs() < 1e-8, "b {b}");
    }

    #[test]
    fn exponential_decay_flags_no_decay() {
        let m: Vec<f64> = (0..8).map(|k| (k * 10) as f64).collect();
        let y = vec![0.9; 8];
        let fit = fit_exponential_decay(&m, &y).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn error_shrinks_with_sample_size() {
        // standard errors scale roughly as 1/sqrt(N)
        let run = |n: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (t, mut y) = synth_cosine(4.0, 8.0, n, 600.0 / n as f64);
            for v in y.iter_mut() {
                *v += 0.02 * rng.sample(rand_distr_standard_normal());
            }
            fit_decaying_cosine(&t, &y).unwrap().get("freq_mhz").unwrap().1
        };
        let mut ratio_sum = 0.0;
        let trials = 8;
        for s in 0..trials {
            ratio_sum += run(100, s) / run(400, 1000 + s);
        }
        let mean_ratio = ratio_sum / trials as f64;
        assert!(mean_ratio > 1.5 && mean_ratio < 3.0, "ratio {mean_ratio}");
    }

    #[test]
    fn jazz_extraction_round_trip() {
        let xi_khz = 6.4;
        let mk = |sign: f64| -> Vec<JazzPoint> {
            (-5..=5)
                .map(|k| {
                    let om = k as f64 * 0.02; // MHz
                    JazzPoint {
                        omega_m_mhz: om,
                        osc_freq_mhz: (om + xi_khz * 1e-3) * sign,
                        positive_branch: sign > 0.0,
                    }
                })
                .collect()
        };
        let mut scan = mk(1.0);
        scan.extend(mk(-1.0));
        let (xi, _) = jazz_extract_zz(&[scan.clone(), scan]).unwrap();
        assert!((xi - xi_khz).abs() < 0.1, "xi {xi}");
    }

    #[test]
    fn jazz_zero_shift_intersects_origin() {
        let mk = |sign: f64| -> Vec<JazzPoint> {
            (1..=4)
                .map(|k| JazzPoint {
                    omega_m_mhz: sign * k as f64 * 0.05,
                    osc_freq_mhz: k as f64 * 0.05,
                    positive_branch: sign > 0.0,
                })
                .collect()
        };
        let mut scan = mk(1.0);
        scan.extend(mk(-1.0));
        let (xi, _) = jazz_extract_zz(&[scan]).unwrap();
        assert!(xi.abs() < 1e-9);
    }

    #[test]
    fn jazz_single_branch_rejected() {
        let scan: Vec<JazzPoint> = (0..4)
            .map(|k| JazzPoint { omega_m_mhz: k as f64, osc_freq_mhz: k as f64, positive_branch: true })
            .collect();
        assert!(jazz_extract_zz(&[scan]).is_err());
    }

    #[test]
    fn assignment_application() {
        let id = AssignmentMatrix::identity();
        let p = apply_assignment([0.2, 0.5, 0.3], &id).unwrap();
        assert_eq!(p, [0.2, 0.5, 0.3]);

        let m = crate::presets::assignment_qa();
        let obs = apply_assignment([0.0, 1.0, 0.0], &m).unwrap();
        assert!((obs[0] - 0.023).abs() < 1e-12);
        assert!((obs[1] - 0.968).abs() < 1e-12);
        assert!((obs[2] - 0.009).abs() < 1e-12);
        let sum: f64 = obs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        assert!(apply_assignment([0.5, 0.2, 0.2], &m).is_err());
    }

    #[test]
    fn assignment_preserves_simplex() {
        let m = crate::presets::assignment_qc();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..(1.0 - a));
            let p = apply_assignment([a, b, 1.0 - a - b], &m).unwrap();
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hahn_echo_fit_recovers_parameters() {
        let tau: Vec<f64> = (1..=12).map(|k| k as f64 * 6.0).collect();
        let truth = (42.0, 32.0, 26.0); // T1, T1f, T2f
        let c0 = truth.1 / truth.0;
        // T2f = 1/(gphif + g1f/2) -> gphif
        let gphif = 1.0 / truth.2 - 0.5 / truth.1;
        let tphif = 1.0 / gphif;
        let data = hahn_echo_ef_forward(&tau, truth.0, truth.1, tphif, &AssignmentMatrix::identity());
        let fit = hahn_echo_ef_fit(
            &tau,
            &data,
            &HahnEchoFitOptions { c0, fit_assignment: false },
        )
        .unwrap();
        assert!(fit.converged);
        let (t1, _) = fit.get("t1_us").unwrap();
        let (t2f, _) = fit.get("t2f_us").unwrap();
        assert!((t1 - truth.0).abs() / truth.0 < 0.05, "t1 {t1}");
        assert!((t2f - truth.2).abs() / truth.2 < 0.05, "t2f {t2f}");
    }

    #[test]
    fn hahn_echo_fit_with_assignment_entries() {
        let tau: Vec<f64> = (1..=14).map(|k| k as f64 * 5.0).collect();
        let m = crate::presets::assignment_qc();
        let gphif = 1.0 / 26.0 - 0.5 / 32.0;
        let data = hahn_echo_ef_forward(&tau, 42.0, 32.0, 1.0 / gphif, &m);
        let fit = hahn_echo_ef_fit(
            &tau,
            &data,
            &HahnEchoFitOptions { c0: 32.0 / 42.0, fit_assignment: true },
        )
        .unwrap();
        let (t1, _) = fit.get("t1_us").unwrap();
        let (t2f, _) = fit.get("t2f_us").unwrap();
        assert!((t1 - 42.0).abs() / 42.0 < 0.05, "t1 {t1}");
        assert!((t2f - 26.0).abs() / 26.0 < 0.05, "t2f {t2f}");
    }

    #[test]
    fn hahn_echo_pure_relaxation_flags_unbounded_dephasing() {
        let tau: Vec<f64> = (1..=10).map(|k| k as f64 * 4.0).collect();
        let data = hahn_echo_ef_forward(&tau, 42.0, 32.0, f64::INFINITY, &AssignmentMatrix::identity());
        let fit = hahn_echo_ef_fit(
            &tau,
            &data,
            &HahnEchoFitOptions { c0: 32.0 / 42.0, fit_assignment: false },
        )
        .unwrap();
        assert!(fit.degenerate, "tphif should be unbounded: {:?}", fit.values);
    }
}
