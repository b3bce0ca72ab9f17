//! Concrete control systems and their numerical flow.
//!
//! A [`SystemModel`] couples a catalog vector field `f(x, u)` with state and
//! input dimensions plus optional Lipschitz metadata. The flow is evaluated
//! by an adaptive Runge-Kutta 5(4) scheme ([`ode`]) that treats input switch
//! times as step boundaries and reports finite-time escape (the blow-up
//! branch of the boundedness-implies-continuation property) as a first-class
//! trajectory status.

pub mod ode;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kfun::MonotoneFn;
use crate::signal::{DisturbanceFamily, Signal};

pub use ode::{integrate, IntegratorConfig, Outcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite field evaluation at t = {t}")]
    ModelError { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    StepLimit { t: f64 },
    #[error("trajectory escaped: maximal interval ends by t = {t_esc} (norm {norm:.3e})")]
    Blowup { t_esc: f64, norm: f64 },
}

/// Euclidean norm on state vectors.
pub fn state_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Catalog vector fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field_id", content = "params", rename_all = "snake_case")]
pub enum FieldKind {
    /// `dx = x * u`; forward complete, not RFC over unbounded inputs.
    ScalarXu,
    /// `dx = x / (1 + |u|)`; RFC with envelope `|x| e^t`.
    ScalarRfc,
    /// `dx = A x + B u`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// `dx = x^2`; finite-time blow-up from positive initial states.
    Quadratic,
    /// `dx = -x + u`; the bounded-reachability demonstration system.
    DecayPlusInput,
}

/// A control system: a catalog field with dimensions and optional
/// one-sided Lipschitz metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    #[serde(flatten)]
    kind: FieldKind,
    n: usize,
    m: usize,
    /// One-sided (log-norm style) bound `L_f(r)` on the field in `x` over the
    /// ball of radius `r`, uniform in the admissible inputs; negative values
    /// certify contraction. Used for certified Gronwall estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    lip_bound: Option<MonotoneFn>,
}

impl SystemModel {
    /// `dx = x u` with the one-sided bound `|u| <= input_radius`.
    pub fn scalar_xu(input_radius: f64) -> Self {
        SystemModel {
            kind: FieldKind::ScalarXu,
            n: 1,
            m: 1,
            lip_bound: Some(MonotoneFn::near_constant(input_radius)),
        }
    }

    /// `dx = x / (1 + |u|)`; the field slope in `x` is at most 1 for every
    /// input value.
    pub fn scalar_rfc() -> Self {
        SystemModel {
            kind: FieldKind::ScalarRfc,
            n: 1,
            m: 1,
            lip_bound: Some(MonotoneFn::near_constant(1.0)),
        }
    }

    /// `dx = A x + B u`; the one-sided bound is the log-norm of `A`.
    pub fn linear(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self, FlowError> {
        let n = a.len();
        if n == 0 || a.iter().any(|row| row.len() != n) {
            return Err(FlowError::Dimension("A must be square".into()));
        }
        if b.len() != n || b.is_empty() || b[0].is_empty() {
            return Err(FlowError::Dimension("B must have n rows".into()));
        }
        let m = b[0].len();
        if b.iter().any(|row| row.len() != m) {
            return Err(FlowError::Dimension("ragged B".into()));
        }
        let mu = log_norm(&a);
        Ok(SystemModel {
            kind: FieldKind::Linear { a, b },
            n,
            m,
            lip_bound: Some(MonotoneFn::near_constant(mu)),
        })
    }

    /// Scalar contraction/expansion `dx = a x` (no input effect).
    pub fn scalar_linear(a: f64) -> Self {
        SystemModel::linear(vec![vec![a]], vec![vec![0.0]]).unwrap()
    }

    /// `dx = x^2`.
    pub fn quadratic() -> Self {
        SystemModel {
            kind: FieldKind::Quadratic,
            n: 1,
            m: 1,
            lip_bound: Some(
                MonotoneFn::new(vec![0.0, 1.0], vec![0.0, 2.0], 2.0)
                    .expect("static table is valid"),
            ),
        }
    }

    /// `dx = -x + u`.
    pub fn decay_plus_input() -> Self {
        SystemModel {
            kind: FieldKind::DecayPlusInput,
            n: 1,
            m: 1,
            lip_bound: Some(MonotoneFn::near_constant(-1.0)),
        }
    }

    pub fn with_lip_bound(mut self, f: Option<MonotoneFn>) -> Self {
        self.lip_bound = f;
        self
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn lip_bound(&self) -> Option<&MonotoneFn> {
        self.lip_bound.as_ref()
    }

    /// Short identifier matching the wire `field_id`.
    pub fn field_id(&self) -> &'static str {
        match self.kind {
            FieldKind::ScalarXu => "scalar_xu",
            FieldKind::ScalarRfc => "scalar_rfc",
            FieldKind::Linear { .. } => "linear",
            FieldKind::Quadratic => "quadratic",
            FieldKind::DecayPlusInput => "decay_plus_input",
        }
    }

    /// Evaluates `f(x, u)` into `out`; errors on non-finite results.
    pub fn eval_field(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) -> Result<(), FlowError> {
        match &self.kind {
            FieldKind::ScalarXu => out[0] = x[0] * u[0],
            FieldKind::ScalarRfc => out[0] = x[0] / (1.0 + u[0].abs()),
            FieldKind::Linear { a, b } => {
                for i in 0..self.n {
                    let mut acc = 0.0;
                    for j in 0..self.n {
                        acc += a[i][j] * x[j];
                    }
                    for j in 0..self.m {
                        acc += b[i][j] * u[j];
                    }
                    out[i] = acc;
                }
            }
            FieldKind::Quadratic => out[0] = x[0] * x[0],
            FieldKind::DecayPlusInput => out[0] = -x[0] + u[0],
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::ModelError { t });
        }
        Ok(())
    }
}

/// Largest eigenvalue of the symmetric part of `a` (the 2-norm log-norm),
/// via cyclic Jacobi rotations.
fn log_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += s[i][j] * s[i][j];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (s[q][q] - s[p][p]) / s[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for i in 0..n {
                    let sip = s[i][p];
                    let siq = s[i][q];
                    s[i][p] = c * sip - sn * siq;
                    s[i][q] = sn * sip + c * siq;
                }
                for i in 0..n {
                    let spi = s[p][i];
                    let sqi = s[q][i];
                    s[p][i] = c * spi - sn * sqi;
                    s[q][i] = sn * spi + c * sqi;
                }
            }
        }
    }
    (0..n).map(|i| s[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Terminal status of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrajStatus {
    Completed { t_final: f64 },
    Blowup { t_esc: f64, norm: f64 },
}

/// A simulated solution on its adaptive time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub status: TrajStatus,
    pub integrator_tol: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least x0")
    }

    pub fn max_norm(&self) -> f64 {
        self.states.iter().map(|x| state_norm(x)).fold(0.0, f64::max)
    }
}

/// Simulates the flow over `[0, t_end]`, recording every accepted step.
pub fn evolve(
    model: &SystemModel,
    x0: &[f64],
    u: &Signal,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, FlowError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let outcome = integrate(model, x0, u, t_end, &[], cfg, &mut |t, x| {
        times.push(t);
        states.push(x.to_vec());
    })?;
    let status = match outcome {
        Outcome::Completed => TrajStatus::Completed { t_final: t_end },
        Outcome::Blowup { t_esc, norm } => TrajStatus::Blowup { t_esc, norm },
    };
    Ok(Trajectory {
        times,
        states,
        status,
        integrator_tol: cfg.tol,
    })
}

/// The state at a single time; a blow-up before `t` is an error carrying the
/// escape time.
pub fn flow_at(
    model: &SystemModel,
    x0: &[f64],
    u: &Signal,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    let mut state: Option<Vec<f64>> = None;
    let outcome = integrate(model, x0, u, t, &[], cfg, &mut |tt, x| {
        if tt == t {
            state = Some(x.to_vec());
        }
    })?;
    match outcome {
        Outcome::Completed => Ok(state.expect("horizon is always sampled")),
        Outcome::Blowup { t_esc, norm } => Err(FlowError::Blowup { t_esc, norm }),
    }
}

/// States at every requested time (sorted ascending); errors on blow-up.
pub fn flow_samples(
    model: &SystemModel,
    x0: &[f64],
    u: &Signal,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>, FlowError> {
    if times.is_empty() {
        return Ok(vec![]);
    }
    let t_end = *times.last().unwrap();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let mut next = 0usize;
    let outcome = integrate(model, x0, u, t_end, times, cfg, &mut |t, x| {
        while next < times.len() && times[next] == t {
            out.push(x.to_vec());
            next += 1;
        }
    })?;
    match outcome {
        Outcome::Completed => Ok(out),
        Outcome::Blowup { t_esc, norm } => Err(FlowError::Blowup { t_esc, norm }),
    }
}

/// Parameters for the randomized system-axiom check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomCheckParams {
    pub n_cases: usize,
    pub seed: u64,
    /// Initial states are drawn from the ball of this radius.
    pub r_max: f64,
    /// Intermediate times `t` are drawn from `(0, t_max]`.
    pub t_max: f64,
    /// Cocycle offsets `h` are drawn from `(0, h_max]`.
    pub h_max: f64,
}

/// Per-axiom maximum residuals over the randomized cases.
///
/// `pass` holds when every residual is at most `axiom_tol = 50 * tol`. The
/// continuity figure is a necessary-condition residual only: the amount by
/// which a step-to-step jump exceeds the local field-magnitude bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomReport {
    pub identity_max: f64,
    pub causality_max: f64,
    pub cocycle_max: f64,
    pub continuity_max: f64,
    pub axiom_tol: f64,
    pub cases: usize,
    pub pass: bool,
}

/// Draws a state uniformly from the ball of radius `r_max`.
pub fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, r_max: f64) -> Vec<f64> {
    // Gaussian direction, radius with density matching the uniform ball.
    let dir: Vec<f64> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        })
        .collect();
    let norm = state_norm(&dir).max(1e-300);
    let radius = r_max * rng.gen_range(0.0_f64..1.0).powf(1.0 / dim as f64);
    dir.iter().map(|d| d / norm * radius).collect()
}

/// Checks the identity, causality, cocycle, and continuity properties of the
/// numerical flow on randomized cases.
pub fn check_axioms(
    model: &SystemModel,
    family: &DisturbanceFamily,
    params: &AxiomCheckParams,
    cfg: &IntegratorConfig,
) -> Result<AxiomReport, FlowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut identity_max: f64 = 0.0;
    let mut causality_max: f64 = 0.0;
    let mut cocycle_max: f64 = 0.0;
    let mut continuity_max: f64 = 0.0;

    for _ in 0..params.n_cases {
        let x0 = sample_ball(&mut rng, model.state_dim(), params.r_max);
        let u = &family.members()[rng.gen_range(0..family.len())];
        let t = rng.gen_range(0.0..params.t_max).max(1e-6);
        let h = rng.gen_range(0.0..params.h_max).max(1e-6);

        // Identity: the flow at time zero is the initial state.
        let x_at_0 = flow_at(model, &x0, u, 0.0, cfg)?;
        let id_res = diff_norm(&x_at_0, &x0);
        identity_max = identity_max.max(id_res);

        // One pass for the states at t and t + h.
        let states = flow_samples(model, &x0, u, &[t, t + h], cfg)?;
        let (x_t, x_th) = (&states[0], &states[1]);

        // Causality: altering the input from time t onward cannot change
        // the state at t.
        let w = &family.members()[rng.gen_range(0..family.len())];
        let altered = u.concat(w, t).map_err(|e| FlowError::Dimension(e.to_string()))?;
        let x_t_alt = flow_at(model, &x0, &altered, t, cfg)?;
        causality_max = causality_max.max(diff_norm(x_t, &x_t_alt));

        // Cocycle: restart from x(t) under the shifted input.
        let restarted = flow_at(model, x_t, &u.shift(t), h, cfg)?;
        cocycle_max = cocycle_max.max(diff_norm(x_th, &restarted));

        // Continuity: each accepted step jump obeys the field-magnitude
        // bound up to a small quadrature pad.
        let traj = evolve(model, &x0, u, t + h, cfg)?;
        continuity_max = continuity_max.max(continuity_residual(model, u, &traj)?);
    }

    let axiom_tol = 50.0 * cfg.tol;
    let pass = identity_max <= axiom_tol
        && causality_max <= axiom_tol
        && cocycle_max <= axiom_tol
        && continuity_max <= axiom_tol;
    Ok(AxiomReport {
        identity_max,
        causality_max,
        cocycle_max,
        continuity_max,
        axiom_tol,
        cases: params.n_cases,
        pass,
    })
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Positive part of `|x(t+h) - x(t)| - h * max |f|` along a trajectory, with
/// the field magnitude estimated at the endpoints and chord midpoint.
fn continuity_residual(
    model: &SystemModel,
    u: &Signal,
    traj: &Trajectory,
) -> Result<f64, FlowError> {
    let mut res: f64 = 0.0;
    let mut f = vec![0.0; model.state_dim()];
    let mut mid = vec![0.0; model.state_dim()];
    for (tw, xw) in traj.times.windows(2).zip(traj.states.windows(2)) {
        let (t0, t1) = (&tw[0], &tw[1]);
        let (x0, x1) = (&xw[0], &xw[1]);
        let h = t1 - t0;
        let uval = u.value_at(*t0);
        model.eval_field(*t0, x0, uval, &mut f)?;
        let mut fmax = state_norm(&f);
        model.eval_field(*t1, x1, uval, &mut f)?;
        fmax = fmax.max(state_norm(&f));
        for i in 0..mid.len() {
            mid[i] = 0.5 * (x0[i] + x1[i]);
        }
        model.eval_field(0.5 * (t0 + t1), &mid, uval, &mut f)?;
        fmax = fmax.max(state_norm(&f));
        let jump = diff_norm(x1, x0);
        res = res.max(jump - 1.01 * h * fmax - 1e-10 * (1.0 + state_norm(x0)));
    }
    Ok(res.max(0.0))
}

/// Estimated flow Lipschitz constant on the ball of radius `r` over times in
/// `[0, tau]`, uniform over the family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Max sampled ratio `|phi(t,x,u) - phi(t,y,u)| / |x - y|`.
    pub empirical: Option<f64>,
    /// Gronwall value `exp(max(0, L_f(r_env)) * tau)` from the model's
    /// one-sided bound, when present.
    pub certified: Option<f64>,
    /// Largest trajectory norm seen while sampling (or `r` if none).
    pub r_env: f64,
    pub tau: f64,
    pub r: f64,
}

impl LipschitzEstimate {
    /// The constant used downstream: certified when available.
    pub fn value(&self) -> f64 {
        self.certified
            .or(self.empirical)
            .expect("estimate carries at least one value")
    }
}

/// Estimates the flow Lipschitz constant `L(tau, r)` by pair sampling, and
/// when the model carries a one-sided bound also returns the certified
/// Gronwall constant. The supremum over `t` includes `t = 0`, so the result
/// is never below 1.
pub fn lipschitz_estimate(
    model: &SystemModel,
    tau: f64,
    r: f64,
    family: &DisturbanceFamily,
    n_pairs: usize,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Result<LipschitzEstimate, FlowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut empirical: f64 = 1.0;
    let mut r_env: f64 = r;
    let n_t = 64;
    let times: Vec<f64> = (0..=n_t).map(|i| tau * i as f64 / n_t as f64).collect();

    for pair in 0..n_pairs {
        let x = sample_ball(&mut rng, model.state_dim(), r);
        // Nearby pairs probe the directional stretch; far pairs the global
        // ratio.
        let y = if pair % 2 == 0 {
            let mut y = sample_ball(&mut rng, model.state_dim(), 1.0);
            let scale = 1e-4 * r.max(1e-6) / state_norm(&y).max(1e-300);
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = xi + *yi * scale;
            }
            y
        } else {
            sample_ball(&mut rng, model.state_dim(), r)
        };
        let dist = diff_norm(&x, &y);
        if dist < 1e-14 {
            continue;
        }
        for u in family.members() {
            let sx = flow_samples(model, &x, u, &times, cfg)?;
            let sy = flow_samples(model, &y, u, &times, cfg)?;
            for (a, b) in sx.iter().zip(&sy) {
                empirical = empirical.max(diff_norm(a, b) / dist);
                r_env = r_env.max(state_norm(a)).max(state_norm(b));
            }
        }
    }

    let certified = model
        .lip_bound()
        .map(|lf| (lf.at(r_env).max(0.0) * tau).exp());
    Ok(LipschitzEstimate {
        empirical: if n_pairs > 0 { Some(empirical) } else { None },
        certified,
        r_env,
        tau,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_family, FamilyParams};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn family(radius: f64) -> DisturbanceFamily {
        sample_family(&FamilyParams {
            radius,
            delta: 0.25,
            lattice_size: 3,
            n_random: 8,
            t_family: 2.0,
            seed: 17,
            input_dim: 1,
            compact_support: false,
        })
        .unwrap()
    }

    #[test]
    fn scalar_rfc_zero_input_is_exponential() {
        let m = SystemModel::scalar_rfc();
        let x = flow_at(&m, &[1.0], &Signal::zero(1), 1.0, &cfg()).unwrap();
        assert!((x[0] - 1.0_f64.exp()).abs() < 1e-7, "got {}", x[0]);
    }

    #[test]
    fn scalar_xu_constant_input() {
        let m = SystemModel::scalar_xu(2.0);
        let x = flow_at(&m, &[1.0], &Signal::constant(vec![2.0]), 1.0, &cfg()).unwrap();
        assert!((x[0] - 2.0_f64.exp()).abs() < 1e-6, "got {}", x[0]);
    }

    #[test]
    fn scalar_rfc_unit_input_halves_rate() {
        let m = SystemModel::scalar_rfc();
        let x = flow_at(&m, &[1.0], &Signal::constant(vec![1.0]), 2.0, &cfg()).unwrap();
        assert!((x[0] - 1.0_f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn linear_contraction_halves_in_ln2() {
        let m = SystemModel::scalar_linear(-1.0);
        let x = flow_at(&m, &[2.0], &Signal::zero(1), 2.0_f64.ln(), &cfg()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_is_exact() {
        let m = SystemModel::scalar_rfc();
        let x0 = vec![0.37];
        let x = flow_at(&m, &x0, &Signal::zero(1), 0.0, &cfg()).unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn quadratic_blows_up_near_reciprocal() {
        let m = SystemModel::quadratic();
        for x0 in [0.5, 1.0, 2.0] {
            let traj = evolve(&m, &[x0], &Signal::zero(1), 2.0 / x0, &cfg()).unwrap();
            match traj.status {
                TrajStatus::Blowup { t_esc, .. } => {
                    assert!(
                        (t_esc - 1.0 / x0).abs() <= 0.02 / x0,
                        "x0={x0}: t_esc={t_esc}"
                    );
                }
                TrajStatus::Completed { .. } => panic!("expected blow-up for x0={x0}"),
            }
        }
    }

    #[test]
    fn quadratic_blowup_reported_across_initial_states() {
        let m = SystemModel::quadratic();
        for i in 0..8 {
            let x0 = 0.1 * (i + 1) as f64;
            let traj = evolve(&m, &[x0], &Signal::zero(1), 1.5 / x0, &cfg()).unwrap();
            assert!(matches!(traj.status, TrajStatus::Blowup { .. }), "x0={x0}");
        }
    }

    #[test]
    fn flow_at_after_blowup_is_error() {
        let m = SystemModel::quadratic();
        let err = flow_at(&m, &[1.0], &Signal::zero(1), 2.0, &cfg()).unwrap_err();
        match err {
            FlowError::Blowup { t_esc, .. } => assert!(t_esc < 1.01),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn evolve_is_bit_deterministic() {
        let m = SystemModel::scalar_rfc();
        let fam = family(1.0);
        let u = &fam.members()[5];
        let a = evolve(&m, &[0.7], u, 2.0, &cfg()).unwrap();
        let b = evolve(&m, &[0.7], u, 2.0, &cfg()).unwrap();
        assert_eq!(a, b);
        // Order independence under parallel evaluation.
        use rayon::prelude::*;
        let runs: Vec<Trajectory> = (0..8)
            .into_par_iter()
            .map(|_| evolve(&m, &[0.7], u, 2.0, &cfg()).unwrap())
            .collect();
        for r in runs {
            assert_eq!(r, a);
        }
    }

    #[test]
    fn scalar_rfc_growth_bound() {
        let m = SystemModel::scalar_rfc();
        let fam = family(1.0);
        for u in fam.members() {
            let traj = evolve(&m, &[0.9], u, 2.0, &cfg()).unwrap();
            for (t, x) in traj.times.iter().zip(&traj.states) {
                assert!(state_norm(x) <= 0.9 * t.exp() * (1.0 + 1e-7));
            }
        }
    }

    #[test]
    fn axiom_residuals_small_and_shrinking() {
        let m = SystemModel::scalar_rfc();
        let fam = family(1.0);
        let params = AxiomCheckParams {
            n_cases: 40,
            seed: 5,
            r_max: 1.5,
            t_max: 1.0,
            h_max: 0.8,
        };
        let tol = 1e-6;
        let full = check_axioms(&m, &fam, &params, &IntegratorConfig::with_tol(tol)).unwrap();
        assert_eq!(full.identity_max, 0.0);
        assert_eq!(full.causality_max, 0.0);
        assert!(full.pass, "report: {full:?}");
        let half = check_axioms(&m, &fam, &params, &IntegratorConfig::with_tol(tol / 2.0)).unwrap();
        assert!(half.cocycle_max < full.cocycle_max);
    }

    #[test]
    fn lipschitz_linear_expansion_matches_exponential() {
        let m = SystemModel::scalar_linear(0.7);
        let fam = family(1.0);
        let est = lipschitz_estimate(&m, 1.5, 1.0, &fam, 8, 3, &cfg()).unwrap();
        let expected = (0.7_f64 * 1.5).exp();
        let emp = est.empirical.unwrap();
        assert!((emp - expected).abs() <= 1e-6 * expected, "emp {emp}");
        let cert = est.certified.unwrap();
        assert!((cert - expected).abs() <= 1e-6 * expected, "cert {cert}");
    }

    #[test]
    fn lipschitz_contraction_caps_at_one() {
        let m = SystemModel::scalar_linear(-1.0);
        let fam = family(1.0);
        let est = lipschitz_estimate(&m, 2.0, 1.0, &fam, 8, 3, &cfg()).unwrap();
        assert!((est.certified.unwrap() - 1.0).abs() < 1e-9);
        assert!(est.empirical.unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn lipschitz_scalar_rfc_certified_gronwall() {
        let m = SystemModel::scalar_rfc();
        let fam = family(1.0);
        let est = lipschitz_estimate(&m, 1.0, 1.0, &fam, 8, 3, &cfg()).unwrap();
        let e = 1.0_f64.exp();
        assert!(est.empirical.unwrap() <= e * (1.0 + 1e-7));
        assert!((est.certified.unwrap() - e).abs() < 1e-6);
    }

    #[test]
    fn log_norm_of_rotation_is_zero() {
        let a = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
        assert!(log_norm(&a).abs() < 1e-12);
        let b = vec![vec![-2.0, 0.0], vec![0.0, -0.5]];
        assert!((log_norm(&b) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn model_json_roundtrip() {
        let m = SystemModel::scalar_xu(1.0);
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j["field_id"], "scalar_xu");
        let back: SystemModel = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
    }
}
