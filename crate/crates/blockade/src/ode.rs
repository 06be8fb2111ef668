//! Adaptive explicit integrator: Dormand-Prince 5(4) embedded pair with a
//! PI step-size controller, dense output onto uniform grids, and a hard
//! step budget. No implicit machinery; the stiff degrees of freedom in this
//! crate are removed analytically before integration (see `meanfield`).

use crate::error::{Error, Result};

/// Tolerances and limits for one integration.
#[derive(Debug, Clone, Copy)]
pub struct Controls {
    /// Relative tolerance on each component.
    pub rtol: f64,
    /// Absolute tolerance floor on each component.
    pub atol: f64,
    /// Optional hard cap on the step size, us.
    pub max_step: Option<f64>,
    /// Budget on attempted steps (accepted + rejected); exceeding it is an error.
    pub max_steps: u64,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            rtol: 1e-8,
            atol: 1e-12,
            max_step: None,
            max_steps: 200_000_000,
        }
    }
}

/// Samples of the solution on the requested uniform grid.
#[derive(Debug, Clone)]
pub struct Sampled<const D: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; D]>,
    /// Accepted steps.
    pub steps: u64,
    /// Rejected trial steps.
    pub rejections: u64,
}

const STAGES: usize = 7;

// Dormand-Prince 5(4) tableau. Row 7 doubles as the 5th-order weights (FSAL).
const A: [[f64; 6]; STAGES - 1] = [
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
const C: [f64; STAGES - 1] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order minus 4th-order weights, for the error estimate.
const E: [f64; STAGES] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

// Dense-output polynomial (order 4): b_i(theta) = theta*(P_i0 + theta*(P_i1 +
// theta*(P_i2 + theta*P_i3))), y(theta) = y0 + h * sum_i b_i(theta) k_i.
#[rustfmt::skip]
const P: [[f64; 4]; STAGES] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

#[inline]
fn finite<const D: usize>(y: &[f64; D]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrate dy/dt = rhs(t, y) from `t0` to `t_end`, sampling the solution at
/// t0 + k*grid_dt (k = 0, 1, ...) with the embedded dense-output interpolant
/// inside accepted steps. The final time is always integrated to, but only
/// grid multiples are emitted.
pub fn integrate<const D: usize>(
    mut rhs: impl FnMut(f64, &[f64; D]) -> [f64; D],
    t0: f64,
    y0: [f64; D],
    t_end: f64,
    grid_dt: f64,
    ctl: &Controls,
) -> Result<Sampled<D>> {
    if t_end <= t0 || (t_end - t0).is_nan() {
        return Err(Error::Config(format!(
            "integration span must be forward in time (t0 = {t0}, t_end = {t_end})"
        )));
    }
    if grid_dt <= 0.0 || grid_dt.is_nan() {
        return Err(Error::Config(format!(
            "output grid spacing must be > 0, got {grid_dt}"
        )));
    }
    if let Some(h) = ctl.max_step {
        // Refuse spans that cannot fit the budget even at the largest
        // permitted step.
        let needed = (t_end - t0) / h;
        if needed > ctl.max_steps as f64 {
            return Err(Error::StepBudget {
                budget: ctl.max_steps,
                t_us: t0,
                t_end_us: t_end,
                hint: format!(
                    "span needs >= {needed:.0} steps of max_step = {h}; shorten the span or \
                     use the slow-manifold integrator"
                ),
            });
        }
    }

    let mut t = t0;
    let mut y = y0;
    let mut f = rhs(t, &y);
    if !finite(&f) || !finite(&y) {
        return Err(Error::NonFinite {
            t_us: t,
            msg: "initial state or derivative is not finite".into(),
            last_state: y0.to_vec(),
        });
    }

    let mut out_t = Vec::new();
    let mut out_y = Vec::new();
    let mut next_k: u64 = 0; // next grid index to emit
    let mut emit = |k: &mut u64, ts: f64, ys: &[f64; D]| {
        out_t.push(ts);
        out_y.push(*ys);
        *k += 1;
    };
    emit(&mut next_k, t0, &y0);

    // Initial step: small fraction of the span, limited by the derivative scale.
    let mut h = {
        let scale = |i: usize| ctl.atol + ctl.rtol * y[i].abs();
        let d1: f64 = (0..D)
            .map(|i| (f[i] / scale(i)).powi(2))
            .sum::<f64>()
            .sqrt();
        let guess = if d1 > 0.0 {
            0.01 / d1
        } else {
            1e-4 * (t_end - t0)
        };
        guess.min(1e-2 * (t_end - t0)).max(1e-12)
    };
    if let Some(hm) = ctl.max_step {
        h = h.min(hm);
    }

    let mut steps: u64 = 0;
    let mut rejections: u64 = 0;
    let mut attempts: u64 = 0;
    let mut err_prev: f64 = 1.0; // for the PI controller

    let mut k = [[0.0; D]; STAGES];

    while t < t_end {
        if attempts >= ctl.max_steps {
            return Err(Error::StepBudget {
                budget: ctl.max_steps,
                t_us: t,
                t_end_us: t_end,
                hint: "raise max_steps, shorten the span, or use the slow-manifold integrator"
                    .into(),
            });
        }
        attempts += 1;

        let h_left = t_end - t;
        let h_try = h.min(h_left);

        k[0] = f;
        for s in 1..STAGES {
            let mut ys = y;
            for (j, a) in A[s - 1].iter().enumerate().take(s) {
                if *a != 0.0 {
                    for i in 0..D {
                        ys[i] += h_try * a * k[j][i];
                    }
                }
            }
            k[s] = rhs(t + C[s - 1] * h_try, &ys);
        }
        // k[6] was evaluated at the 5th-order solution point (FSAL).
        let mut y_new = y;
        for (j, a) in A[STAGES - 2].iter().enumerate() {
            if *a != 0.0 {
                for i in 0..D {
                    y_new[i] += h_try * a * k[j][i];
                }
            }
        }
        if !finite(&y_new) {
            return Err(Error::NonFinite {
                t_us: t,
                msg: format!("solution diverged during a step of h = {h_try}"),
                last_state: y.to_vec(),
            });
        }

        let mut err_sq = 0.0;
        for i in 0..D {
            let mut e = 0.0;
            for s in 0..STAGES {
                e += E[s] * k[s][i];
            }
            e *= h_try;
            let scale = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / D as f64).sqrt();

        if err <= 1.0 || h_try <= 1e-14 * t.abs().max(1.0) {
            // Accept. Emit grid samples that fall inside (t, t + h_try].
            let f_new = k[STAGES - 1];
            let t_new = t + h_try;
            loop {
                let ts = t0 + next_k as f64 * grid_dt;
                if ts > t_new + 1e-9 * grid_dt || ts > t_end {
                    break;
                }
                if ts <= t {
                    // Guard against duplicate emission at step boundaries.
                    if (ts - t).abs() < 1e-12 * grid_dt && next_k > 0 {
                        emit(&mut next_k, ts, &y);
                        continue;
                    }
                    next_k += 1;
                    continue;
                }
                let theta = ((ts - t) / h_try).clamp(0.0, 1.0);
                let yi = dense_eval(&y, &k, h_try, theta);
                emit(&mut next_k, ts, &yi);
            }
            t = t_new;
            y = y_new;
            f = f_new;
            steps += 1;

            // PI controller (order 5 -> exponent 1/5 split 0.7/0.4).
            let e_n = err.max(1e-10);
            let fac = 0.9 * e_n.powf(-0.14) * err_prev.powf(0.08);
            err_prev = e_n;
            h = h_try * fac.clamp(0.2, 5.0);
        } else {
            rejections += 1;
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
        }
        if let Some(hm) = ctl.max_step {
            h = h.min(hm);
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::NonFinite {
                t_us: t,
                msg: format!("step size collapsed to {h}"),
                last_state: y.to_vec(),
            });
        }
    }

    Ok(Sampled {
        t: out_t,
        y: out_y,
        steps,
        rejections,
    })
}

/// Interpolation inside one accepted step using the stage derivatives.
/// Linear in the k's, so linear invariants of the flow survive sampling.
#[inline]
fn dense_eval<const D: usize>(
    y0: &[f64; D],
    k: &[[f64; D]; STAGES],
    h: f64,
    theta: f64,
) -> [f64; D] {
    let mut out = *y0;
    for (s, row) in P.iter().enumerate() {
        let b = theta * (row[0] + theta * (row[1] + theta * (row[2] + theta * row[3])));
        if b != 0.0 {
            for i in 0..D {
                out[i] += h * b * k[s][i];
            }
        }
    }
    out
}
