//! Embedded Dormand-Prince 5(4) integrator over flat complex state vectors.
//!
//! The right-hand sides in this crate are mildly oscillatory after the
//! interaction-picture transform, so a classic adaptive RK with PI step
//! control is both simple and fast at the dimensions involved.

use crate::error::{Result, TipError};
use crate::linalg::C64;

pub struct RkOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
}

impl Default for RkOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_steps: 50_000_000, h_init: None }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate dy/dt = rhs(t, y) from t0 to t1, calling `sample` exactly at
/// each time in `sample_times` (must be ascending, within [t0, t1]).
pub fn integrate<F, S>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y: &mut Vec<C64>,
    opts: &RkOptions,
    sample_times: &[f64],
    mut sample: S,
) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(f64, &[C64]),
{
    let n = y.len();
    let span = t1 - t0;
    if span <= 0.0 {
        for &ts in sample_times {
            sample(ts, y);
        }
        return Ok(());
    }

    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut ytmp = k1.clone();
    let mut ynew = k1.clone();

    let mut t = t0;
    let mut h = opts.h_init.unwrap_or(span * 1e-4).min(span);
    let mut next_sample = 0usize;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 + 1e-14 {
        sample(sample_times[next_sample], y);
        next_sample += 1;
    }

    rhs(t, y, &mut k1);
    let mut err_prev: f64 = 1.0;
    let mut steps = 0usize;

    while t < t1 - 1e-12 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(TipError::IntegrationFailure(format!(
                "step budget exhausted at t = {t:.6} ns (h = {h:.3e})"
            )));
        }
        let mut h_clip = h.min(t1 - t);
        if next_sample < sample_times.len() {
            let ts = sample_times[next_sample];
            if ts > t + 1e-14 {
                h_clip = h_clip.min(ts - t);
            }
        }
        let hc = h_clip;
        if hc < 1e-14 {
            return Err(TipError::IntegrationFailure(format!(
                "step size collapsed to {hc:.3e} ns at t = {t:.6} ns"
            )));
        }

        for i in 0..n {
            ytmp[i] = y[i] + hc * A21 * k1[i];
        }
        rhs(t + hc / 5.0, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + hc * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + 3.0 * hc / 10.0, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + hc * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + 4.0 * hc / 5.0, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + hc * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + 8.0 * hc / 9.0, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + hc * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + hc, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + hc * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + hc, &ynew, &mut k7);

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = hc
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err_sq += (e.norm() / scale).powi(2);
        }
        let err = (err_sq / n as f64).sqrt().max(1e-30);

        if err <= 1.0 {
            t += hc;
            std::mem::swap(y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            while next_sample < sample_times.len() && sample_times[next_sample] <= t + 1e-12 {
                sample(sample_times[next_sample], y);
                next_sample += 1;
            }
            // PI controller
            let fac = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h = hc * fac.clamp(0.2, 6.0);
            err_prev = err;
        } else {
            h = hc * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    while next_sample < sample_times.len() {
        sample(sample_times[next_sample], y);
        next_sample += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_complex_oscillator() {
        // y' = i w y  =>  y = exp(i w t)
        let w = 3.7;
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(
            |_t, y, dy| {
                dy[0] = C64::new(0.0, w) * y[0];
            },
            0.0,
            10.0,
            &mut y,
            &RkOptions::default(),
            &[],
            |_, _| {},
        )
        .unwrap();
        let expect = C64::from_polar(1.0, w * 10.0);
        assert!((y[0] - expect).norm() < 1e-8);
    }

    #[test]
    fn hits_sample_times() {
        let mut seen = Vec::new();
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(
            |_t, y, dy| {
                dy[0] = -y[0];
            },
            0.0,
            2.0,
            &mut y,
            &RkOptions::default(),
            &[0.5, 1.0, 1.5, 2.0],
            |t, y| seen.push((t, y[0].re)),
        )
        .unwrap();
        assert_eq!(seen.len(), 4);
        for (t, v) in seen {
            assert!((v - (-t).exp()).abs() < 1e-8);
        }
    }
}
