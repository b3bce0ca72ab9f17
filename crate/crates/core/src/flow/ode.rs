//! Adaptive Dormand-Prince 5(4) stepping for piecewise-constant inputs.
//!
//! Input switch times are mandatory step boundaries, so within every step the
//! input is a constant vector and the scheme keeps its full order. Requested
//! target times are hit exactly (steps are clamped, never interpolated).

use crate::flow::{state_norm, FlowError, SystemModel};
use crate::signal::Signal;

/// Integrator configuration shared by every flow evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    /// Error-per-unit-step tolerance: accepted steps keep the local error
    /// estimate below `tol * (1 + |y|) * h`.
    pub tol: f64,
    /// Escape threshold; crossing it declares a blow-up.
    pub escape_norm: f64,
    /// Hard cap on accepted plus rejected steps per integration.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            tol: 1e-9,
            escape_norm: 1e9,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorConfig {
            tol,
            ..Default::default()
        }
    }
}

/// Terminal state of an integration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    /// The trajectory norm crossed the escape threshold (or the step size
    /// underflowed while the state was already large) at `t_esc`.
    Blowup { t_esc: f64, norm: f64 },
}

// Dormand-Prince 5(4) coefficients.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and 4th-order solutions.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SOFT_ESCAPE: f64 = 1e6;

fn step_floor(t: f64) -> f64 {
    1e-13 * t.abs().max(1.0)
}

/// Integrates `model` from `x0` under input `u` up to `t_end`, forcing step
/// boundaries at every input switch and every entry of `targets`.
///
/// `on_point(t, x)` fires at `t = 0` and after every accepted step; target
/// times therefore always appear as sampled points. A blow-up ends the run
/// early with the `Blowup` outcome. Bitwise deterministic for fixed inputs.
pub fn integrate(
    model: &SystemModel,
    x0: &[f64],
    u: &Signal,
    t_end: f64,
    targets: &[f64],
    cfg: &IntegratorConfig,
    on_point: &mut dyn FnMut(f64, &[f64]),
) -> Result<Outcome, FlowError> {
    if x0.len() != model.state_dim() {
        return Err(FlowError::Dimension(format!(
            "state dim {} vs model dim {}",
            x0.len(),
            model.state_dim()
        )));
    }
    if u.dim() != model.input_dim() {
        return Err(FlowError::Dimension(format!(
            "input dim {} vs model dim {}",
            u.dim(),
            model.input_dim()
        )));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(FlowError::Dimension(format!("bad horizon {t_end}")));
    }

    on_point(0.0, x0);
    if t_end == 0.0 {
        return Ok(Outcome::Completed);
    }
    if state_norm(x0) > cfg.escape_norm {
        return Ok(Outcome::Blowup {
            t_esc: 0.0,
            norm: state_norm(x0),
        });
    }

    // Forced step ends: switches, targets, and the horizon itself.
    let mut forced: Vec<f64> = u
        .switch_times()
        .iter()
        .chain(targets.iter())
        .copied()
        .filter(|&t| t > 0.0 && t < t_end)
        .collect();
    forced.push(t_end);
    forced.sort_by(|a, b| a.partial_cmp(b).unwrap());
    forced.dedup();

    let n = x0.len();
    let mut y = x0.to_vec();
    let mut t = 0.0_f64;
    let mut fi = 0usize;

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut uval = u.value_at(0.0).to_vec();
    model.eval_field(0.0, &y, &uval, &mut k[0])?;
    let mut k1_fresh = true;

    let mut h = {
        let f0 = state_norm(&k[0]);
        let span = forced[0];
        (1e-2 * (1.0 + state_norm(&y)) / (1.0 + f0)).min(span)
    };

    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(FlowError::StepLimit { t });
        }
        let next_forced = forced[fi];
        let clamped = h >= next_forced - t;
        let h_step = if clamped { next_forced - t } else { h };

        if !k1_fresh {
            let cur = u.value_at(t);
            if cur != uval.as_slice() {
                uval.clear();
                uval.extend_from_slice(cur);
            }
            model.eval_field(t, &y, &uval, &mut k[0])?;
            k1_fresh = true;
        }

        // Stages 2..=6 and the two solution candidates. A non-finite value
        // inside a trial step rejects it instead of failing the run: large
        // trial steps near a blow-up overshoot routinely.
        let mut finite = true;
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, row) in rows.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h_step * acc;
            }
            if stage.iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
            let c = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0][s];
            if model
                .eval_field(t + c * h_step, &stage, &uval, &mut k[s + 1])
                .is_err()
            {
                finite = false;
                break;
            }
        }
        if finite {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += B[j] * k[j][i];
                }
                y_new[i] = y[i] + h_step * acc;
            }
            finite = y_new.iter().all(|v| v.is_finite());
        }
        if finite && model.eval_field(t + h_step, &y_new, &uval, &mut k[6]).is_err() {
            finite = false;
        }

        let err = if finite {
            let mut acc = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * k[j][i];
                }
                e *= h_step;
                let sk = cfg.tol * (1.0 + y[i].abs().max(y_new[i].abs()));
                acc += (e / sk) * (e / sk);
            }
            (acc / n as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err <= h_step {
            // Accept; land exactly on forced times.
            t = if clamped { next_forced } else { t + h_step };
            if clamped {
                fi += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            on_point(t, &y);
            let norm = state_norm(&y);
            if norm > cfg.escape_norm {
                return Ok(Outcome::Blowup { t_esc: t, norm });
            }
            // FSAL: last stage is the next step's first, unless the input
            // value changes at this boundary.
            if u.value_at(t) == uval.as_slice() {
                k.swap(0, 6);
                k1_fresh = true;
            } else {
                k1_fresh = false;
            }
            let scale = if err > 0.0 {
                (0.9 * (h_step / err).powf(0.25)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = h_step * scale;
        } else {
            let scale = if err.is_finite() {
                (0.9 * (h_step / err).powf(0.25)).clamp(0.2, 0.9)
            } else {
                0.2
            };
            h = h_step * scale;
            if h < step_floor(t) {
                let norm = state_norm(&y);
                if norm > SOFT_ESCAPE {
                    return Ok(Outcome::Blowup { t_esc: t, norm });
                }
                // Distinguish a genuinely singular field from stiffness.
                let mut probe = vec![0.0; n];
                model.eval_field(t, &y, &uval, &mut probe)?;
                return Err(FlowError::StepUnderflow { t });
            }
        }
    }
    Ok(Outcome::Completed)
}
