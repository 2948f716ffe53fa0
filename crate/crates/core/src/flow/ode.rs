//! Dormand-Prince 5(4) embedded pair for matrix-valued linear systems
//! `Y' = S(t) Y`.

use nalgebra::DMatrix;

use super::FlowError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

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
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// b - b*, fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `Y' = s(t) Y` from `t0` through the monotone sequence `targets`,
/// returning the state at each target. `post_step(prev, next)` may replace an
/// accepted state (for re-orthonormalization); it sees the state before and
/// after every accepted step.
pub(crate) fn integrate<F, P>(
    s: F,
    y0: DMatrix<f64>,
    t0: f64,
    targets: &[f64],
    opts: &IntegratorOptions,
    mut post_step: P,
) -> Result<Vec<DMatrix<f64>>, FlowError>
where
    F: Fn(f64) -> Result<DMatrix<f64>, FlowError>,
    P: FnMut(&DMatrix<f64>, &mut DMatrix<f64>) -> Result<(), FlowError>,
{
    let mut out = Vec::with_capacity(targets.len());
    let mut t = t0;
    let mut y = y0;
    let mut h_abs: f64 = 1e-2;
    let mut steps = 0usize;
    for &target in targets {
        let span = target - t;
        if span == 0.0 {
            out.push(y.clone());
            continue;
        }
        let dir = span.signum();
        while (target - t) * dir > 0.0 {
            let remaining = (target - t).abs();
            let mut h = h_abs.min(remaining);
            // Avoid a sliver of a step just before the target.
            if remaining - h < 1e-3 * h {
                h = remaining;
            }
            let h_signed = h * dir;
            let (y_new, err) = dopri_step(&s, t, &y, h_signed, opts)?;
            steps += 1;
            if steps > opts.max_steps {
                return Err(FlowError::Integration {
                    t,
                    message: format!("exceeded {} steps", opts.max_steps),
                });
            }
            if !err.is_finite() {
                return Err(FlowError::Integration {
                    t,
                    message: "non-finite state".into(),
                });
            }
            if err <= 1.0 {
                t = if h == remaining { target } else { t + h_signed };
                let mut y_acc = y_new;
                post_step(&y, &mut y_acc)?;
                y = y_acc;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h_abs = h * factor;
            } else {
                h_abs = h * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
                if h_abs < 1e-13 * t.abs().max(1.0) {
                    return Err(FlowError::Integration {
                        t,
                        message: format!("step size underflow (h = {h_abs:e})"),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn dopri_step<F>(
    s: &F,
    t: f64,
    y: &DMatrix<f64>,
    h: f64,
    opts: &IntegratorOptions,
) -> Result<(DMatrix<f64>, f64), FlowError>
where
    F: Fn(f64) -> Result<DMatrix<f64>, FlowError>,
{
    let mut k: Vec<DMatrix<f64>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                yi += kj * (h * a);
            }
        }
        let si = s(t + C[stage] * h)?;
        k.push(si * yi);
    }
    let mut y_new = y.clone();
    let mut err = DMatrix::zeros(y.nrows(), y.ncols());
    for i in 0..7 {
        if B[i] != 0.0 {
            y_new += &k[i] * (h * B[i]);
        }
        if E[i] != 0.0 {
            err += &k[i] * (h * E[i]);
        }
    }
    let mut acc = 0.0;
    for ((e, a), b) in err.iter().zip(y.iter()).zip(y_new.iter()) {
        let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
        acc += (e / sc).powi(2);
    }
    let norm = (acc / err.len().max(1) as f64).sqrt();
    Ok((y_new, norm))
}
