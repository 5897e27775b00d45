//! Adaptive Dormand–Prince 5(4) integration with FSAL and step clamping to
//! the recording grid.

use super::DynError;

/// Right-hand side `ẋ = f(t, x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.1)(t, x, dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            atol: 1e-9,
            rtol: 1e-7,
        }
    }
}

pub const MIN_STEP: f64 = 1e-12;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `field` from `x0` at `t0` and records the state every
/// `dt_record` for `n_records` samples (the first sample is `x0`).
pub fn integrate_recorded(
    field: &dyn VectorField,
    x0: &[f64],
    t0: f64,
    dt_record: f64,
    n_records: usize,
    tol: Tolerances,
) -> Result<Vec<Vec<f64>>, DynError> {
    let d = field.dim();
    assert_eq!(x0.len(), d, "initial condition dimension");
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(DynError::NonFiniteState { t: t0 });
    }
    let mut out = Vec::with_capacity(n_records);
    out.push(x0.to_vec());

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    let mut y = x0.to_vec();
    let mut t = t0;
    let mut ytmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    field.eval(t, &y, &mut k[0]);
    let mut h = initial_step(field, t, &y, &k[0], tol).min(dt_record);

    for rec in 1..n_records {
        let t_target = t0 + rec as f64 * dt_record;
        while t < t_target {
            let remaining = t_target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < MIN_STEP && !last {
                return Err(DynError::StepSizeUnderflow { t, h: step });
            }
            for s in 1..7 {
                for i in 0..d {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    ytmp[i] = acc;
                }
                field.eval(t + C[s] * step, &ytmp, &mut k[s]);
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL).
            ynew.copy_from_slice(&ytmp);
            let mut k7 = vec![0.0; d];
            field.eval(t + step, &ynew, &mut k7);
            let mut err = 0.0;
            for i in 0..d {
                let mut e = 0.0;
                for s in 0..6 {
                    e += E[s] * k[s][i];
                }
                e += E[6] * k7[i];
                e *= step;
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / d as f64).sqrt();
            if !err.is_finite() || !ynew.iter().all(|v| v.is_finite()) {
                // Shrink; non-finite stages usually mean the step overshot.
                h = step * 0.2;
                if h < MIN_STEP {
                    return Err(DynError::NonFiniteState { t });
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { t_target } else { t + step };
                y.copy_from_slice(&ynew);
                k[0] = k7;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // A clamped final step says nothing about the natural step size.
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < MIN_STEP {
                    return Err(DynError::StepSizeUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(field: &dyn VectorField, t: f64, y: &[f64], f0: &[f64], tol: Tolerances) -> f64 {
    let d = y.len();
    let scale = |i: usize| tol.atol + tol.rtol * y[i].abs();
    let d0 = (y
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / d as f64)
        .sqrt();
    let d1 = (f0
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / d as f64)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; d];
    field.eval(t + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / scale(i)).powi(2))
        .sum::<f64>()
        / d as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
