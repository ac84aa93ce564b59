//! Adaptive Dormand-Prince 5(4) integrator used for both Schrödinger
//! (complex vector) and Lindblad (complex matrix) right-hand sides.
//!
//! Output times are hit by clipping the step to the next requested time
//! rather than by dense-output interpolation; the controller re-expands the
//! step afterwards, so the cost of clipping is negligible at the output
//! cadences used here.

use crate::{C64, Error, Result};
use nalgebra::{DMatrix, DVector};

/// State container usable by the integrator.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    fn assign(&mut self, other: &Self);
    /// self += c * other
    fn axpy_real(&mut self, c: f64, other: &Self);
    fn fill_zero(&mut self);
    /// max_i |e_i| / (atol + rtol * max(|y_i|, |y_new_i|))
    fn error_ratio(e: &Self, y: &Self, y_new: &Self, rtol: f64, atol: f64) -> f64;
}

macro_rules! impl_ode_state {
    ($ty:ty) => {
        impl OdeState for $ty {
            fn zeros_like(&self) -> Self {
                let mut z = self.clone();
                z.fill(C64::new(0.0, 0.0));
                z
            }
            fn assign(&mut self, other: &Self) {
                self.copy_from(other);
            }
            fn axpy_real(&mut self, c: f64, other: &Self) {
                let cc = C64::new(c, 0.0);
                for i in 0..self.len() {
                    self[i] += cc * other[i];
                }
            }
            fn fill_zero(&mut self) {
                self.fill(C64::new(0.0, 0.0));
            }
            fn error_ratio(e: &Self, y: &Self, y_new: &Self, rtol: f64, atol: f64) -> f64 {
                let mut worst = 0.0f64;
                for i in 0..e.len() {
                    let scale = atol + rtol * y[i].norm().max(y_new[i].norm());
                    let r = e[i].norm() / scale;
                    if r > worst {
                        worst = r;
                    }
                }
                worst
            }
        }
    };
}

impl_ode_state!(DVector<C64>);
impl_ode_state!(DMatrix<C64>);

/// Dormand-Prince coefficients.
const A: [[f64; 6]; 6] = [
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
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            max_steps: 200_000_000,
        }
    }
}

/// Integrate dy/dt = f(t, y) from `t0`, invoking `observe(k, t, y)` at each
/// `output_times[k]` (which must be strictly increasing and ≥ t0). Returns the
/// state at the final output time.
pub fn integrate_dp5<S, F, O>(
    rhs: &mut F,
    t0: f64,
    y0: &S,
    output_times: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
    O: FnMut(usize, f64, &S),
{
    if output_times.is_empty() {
        return Err(Error::InvalidParameter("no output times requested".into()));
    }
    for w in output_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "output times must be strictly increasing".into(),
            ));
        }
    }
    if output_times[0] < t0 {
        return Err(Error::InvalidParameter(
            "output times must not precede t0".into(),
        ));
    }

    let t_end = *output_times.last().unwrap();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k: Vec<S> = (0..7).map(|_| y0.zeros_like()).collect();
    let mut y_stage = y0.zeros_like();
    let mut y_new = y0.zeros_like();
    let mut err = y0.zeros_like();
    let mut out_idx = 0;

    // Emit any outputs that coincide with t0.
    while out_idx < output_times.len() && output_times[out_idx] <= t0 + 1e-300 {
        observe(out_idx, t0, &y);
        out_idx += 1;
    }
    if out_idx >= output_times.len() {
        return Ok(y);
    }

    // k[0] is kept equal to f(t, y) throughout: FSAL on acceptance, untouched
    // on rejection.
    rhs(t, &y, &mut k[0]);
    let mut h = initial_step(t_end - t0);
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Numerical(format!(
                "integrator exceeded {} steps at t = {t:.6e}",
                opts.max_steps
            )));
        }
        let next_out = output_times[out_idx];
        let mut clipped = false;
        if t + h >= next_out {
            h = next_out - t;
            clipped = true;
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::Numerical(format!(
                "step-size underflow at t = {t:.6e}"
            )));
        }
        // stages 2..7
        for s in 0..6 {
            y_stage.assign(&y);
            for j in 0..=s {
                if A[s][j] != 0.0 {
                    y_stage.axpy_real(h * A[s][j], &k[j]);
                }
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            rhs(t + C[s] * h, &y_stage, &mut tail[0]);
        }
        // 5th-order solution and embedded error
        y_new.assign(&y);
        err.fill_zero();
        for j in 0..7 {
            if B5[j] != 0.0 {
                y_new.axpy_real(h * B5[j], &k[j]);
            }
            if ERR[j] != 0.0 {
                err.axpy_real(h * ERR[j], &k[j]);
            }
        }
        let ratio = S::error_ratio(&err, &y, &y_new, opts.rtol, opts.atol);
        if ratio <= 1.0 {
            t = if clipped { next_out } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            // FSAL: stage 7 was evaluated at (t+h, y_new)
            k.swap(0, 6);
            if clipped {
                observe(out_idx, t, &y);
                out_idx += 1;
                if out_idx >= output_times.len() {
                    return Ok(y);
                }
            }
            let grow = if ratio > 0.0 {
                (0.9 * ratio.powf(-0.2)).min(5.0)
            } else {
                5.0
            };
            h *= grow.max(0.2);
        } else {
            h *= (0.9 * ratio.powf(-0.2)).max(0.1);
        }
    }
    Ok(y)
}

fn initial_step(span: f64) -> f64 {
    (span / 1000.0).max(1e-300)
}
