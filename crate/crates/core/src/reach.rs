//! Reachability envelopes and the additive RFC bound.
//!
//! [`envelope_estimate`] tabulates `mu(r, t)`: the largest trajectory norm
//! over sampled initial states with `|x| <= r`, disturbance-family members,
//! and times up to `t`. The table is monotone in both arguments by
//! construction (cumulative max) and is always an under-approximation of the
//! true supremum over the full disturbance ball. [`mu_to_xi`] reduces the
//! envelope to the additive form `xi(|x|) + xi(t) + c`, and
//! [`rfc_bound_check`] / [`divergence_probe`] test that form against fresh
//! trajectories.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{flow_samples, sample_ball, state_norm, FlowError, IntegratorConfig, SystemModel};
use crate::kfun::{KfunError, MonotoneFn};
use crate::signal::{sample_family, DisturbanceFamily, FamilyParams, Signal, SignalError};

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(
        "non-RFC witness: trajectory from |x| = {:.4} under member {member} escapes by t = {t_esc:.4}",
        state_norm(.x)
    )]
    NonRfcWitness {
        x: Vec<f64>,
        member: usize,
        t_esc: f64,
    },
    #[error("envelope is not monotone: {0}")]
    NonMonotone(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Kfun(#[from] KfunError),
}

impl ReachError {
    fn from_blowup(e: FlowError, x: &[f64], member: usize) -> ReachError {
        match e {
            FlowError::Blowup { t_esc, .. } => ReachError::NonRfcWitness {
                x: x.to_vec(),
                member,
                t_esc,
            },
            other => ReachError::Flow(other),
        }
    }
}

/// Sampling parameters for envelope estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeParams {
    /// Ascending nonnegative state radii.
    pub r_grid: Vec<f64>,
    /// Ascending times starting at 0.
    pub t_grid: Vec<f64>,
    /// Random sphere directions per radius.
    pub n_sphere: usize,
    /// Random interior states per radius.
    pub n_interior: usize,
    pub seed: u64,
    /// Hill-climb the top-q maximizing signals over lattice values (0 = off).
    pub refine_top: usize,
    pub refine_sweeps: usize,
}

impl EnvelopeParams {
    pub fn new(r_grid: Vec<f64>, t_grid: Vec<f64>, n_sphere: usize, seed: u64) -> Self {
        EnvelopeParams {
            r_grid,
            t_grid,
            n_sphere,
            n_interior: n_sphere / 2,
            seed,
            refine_top: 5,
            refine_sweeps: 3,
        }
    }

    fn validate(&self) -> Result<(), ReachError> {
        let ascending = |g: &[f64]| g.windows(2).all(|w| w[1] > w[0]);
        if self.r_grid.is_empty() || !ascending(&self.r_grid) || self.r_grid[0] < 0.0 {
            return Err(ReachError::Contract(
                "r_grid must be ascending and nonnegative".into(),
            ));
        }
        if self.t_grid.first() != Some(&0.0) || !ascending(&self.t_grid) {
            return Err(ReachError::Contract(
                "t_grid must be ascending and start at 0".into(),
            ));
        }
        if self.n_sphere == 0 {
            return Err(ReachError::Contract("n_sphere must be positive".into()));
        }
        Ok(())
    }
}

/// Tabulated reachability bound `mu(r, t)`, nondecreasing in both arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    r_grid: Vec<f64>,
    t_grid: Vec<f64>,
    /// `values[i][j]` approximates `mu(r_grid[i], t_grid[j])`.
    values: Vec<Vec<f64>>,
    family_ref: FamilyParams,
    n_sphere: usize,
}

impl Envelope {
    /// Builds an envelope from explicit values, enforcing the monotonicity
    /// invariant by cumulative max along both axes.
    pub fn from_values(
        r_grid: Vec<f64>,
        t_grid: Vec<f64>,
        mut values: Vec<Vec<f64>>,
        family_ref: FamilyParams,
        n_sphere: usize,
    ) -> Result<Self, ReachError> {
        if values.len() != r_grid.len() || values.iter().any(|row| row.len() != t_grid.len()) {
            return Err(ReachError::Contract("value matrix shape mismatch".into()));
        }
        monotonize(&mut values);
        Ok(Envelope {
            r_grid,
            t_grid,
            values,
            family_ref,
            n_sphere,
        })
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn family_ref(&self) -> &FamilyParams {
        &self.family_ref
    }

    /// Bilinear interpolation with clamping onto the grid box.
    pub fn value_at(&self, r: f64, t: f64) -> f64 {
        let (i0, i1, wr) = bracket(&self.r_grid, r);
        let (j0, j1, wt) = bracket(&self.t_grid, t);
        let v00 = self.values[i0][j0];
        let v01 = self.values[i0][j1];
        let v10 = self.values[i1][j0];
        let v11 = self.values[i1][j1];
        let a = v00 + (v10 - v00) * wr;
        let b = v01 + (v11 - v01) * wr;
        a + (b - a) * wt
    }

    fn check_monotone(&self) -> Result<(), ReachError> {
        for (i, row) in self.values.iter().enumerate() {
            for j in 1..row.len() {
                if row[j] < row[j - 1] {
                    return Err(ReachError::NonMonotone(format!(
                        "row {i} decreases at column {j}"
                    )));
                }
            }
            if i > 0 {
                for j in 0..row.len() {
                    if row[j] < self.values[i - 1][j] {
                        return Err(ReachError::NonMonotone(format!(
                            "column {j} decreases at row {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let i = grid.partition_point(|&g| g <= x);
    let w = (x - grid[i - 1]) / (grid[i] - grid[i - 1]);
    (i - 1, i, w)
}

fn monotonize(values: &mut [Vec<f64>]) {
    for row in values.iter_mut() {
        for j in 1..row.len() {
            row[j] = row[j].max(row[j - 1]);
        }
    }
    for i in 1..values.len() {
        for j in 0..values[i].len() {
            values[i][j] = values[i][j].max(values[i - 1][j]);
        }
    }
}

/// Norms along one trajectory at the grid times, plus its peak.
fn trajectory_norms(
    model: &SystemModel,
    x: &[f64],
    u: &Signal,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    let states = flow_samples(model, x, u, t_grid, cfg)?;
    Ok(states.iter().map(|s| state_norm(s)).collect())
}

/// Estimates the reachability envelope over the family.
///
/// Initial states per radius: random sphere directions, interior samples,
/// and the maximizing states carried over from the previous radius. The
/// resulting table is monotonized and reproducible for a fixed seed; a
/// blow-up is returned as a non-RFC witness.
pub fn envelope_estimate(
    model: &SystemModel,
    family: &DisturbanceFamily,
    params: &EnvelopeParams,
    cfg: &IntegratorConfig,
) -> Result<Envelope, ReachError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dim = model.state_dim();
    let mut values = vec![vec![0.0_f64; params.t_grid.len()]; params.r_grid.len()];
    let mut carried: Vec<Vec<f64>> = Vec::new();
    let mut extra_signals: Vec<Signal> = Vec::new();

    for (ri, &r) in params.r_grid.iter().enumerate() {
        let mut states: Vec<Vec<f64>> = Vec::new();
        if r == 0.0 {
            states.push(vec![0.0; dim]);
        } else {
            if dim == 1 {
                // The sphere in one dimension is just the two endpoints.
                states.push(vec![r]);
                states.push(vec![-r]);
            } else {
                for _ in 0..params.n_sphere {
                    let mut x = sample_ball(&mut rng, dim, 1.0);
                    let norm = state_norm(&x).max(1e-300);
                    for v in &mut x {
                        *v *= r / norm;
                    }
                    states.push(x);
                }
            }
            for _ in 0..params.n_interior {
                states.push(sample_ball(&mut rng, dim, r));
            }
            for prev in &carried {
                let norm = state_norm(prev);
                if norm > 1e-300 {
                    states.push(prev.iter().map(|v| v * r / norm).collect());
                }
            }
        }

        let mut scores: Vec<(f64, usize, usize)>;
        let mut newly_refined: Vec<(Signal, Vec<f64>)> = Vec::new();
        {
            let signals: Vec<&Signal> = family
                .members()
                .iter()
                .chain(extra_signals.iter())
                .collect();
            let jobs: Vec<(usize, usize)> = (0..states.len())
                .flat_map(|si| (0..signals.len()).map(move |ui| (si, ui)))
                .collect();
            let results: Vec<Result<(usize, usize, Vec<f64>), ReachError>> = jobs
                .par_iter()
                .map(|&(si, ui)| {
                    trajectory_norms(model, &states[si], signals[ui], &params.t_grid, cfg)
                        .map(|norms| (si, ui, norms))
                        .map_err(|e| ReachError::from_blowup(e, &states[si], ui))
                })
                .collect();

            scores = Vec::with_capacity(jobs.len());
            for res in results {
                let (si, ui, norms) = res?;
                let mut peak: f64 = 0.0;
                for (j, &n) in norms.iter().enumerate() {
                    values[ri][j] = values[ri][j].max(n);
                    peak = peak.max(n);
                }
                scores.push((peak, si, ui));
            }

            // Coordinate hill-climb over lattice values for the strongest
            // signals; improved signals join the candidate pool.
            if params.refine_top > 0 && !family.lattice().is_empty() {
                scores.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                for &(peak, si, ui) in scores.iter().take(params.refine_top) {
                    let refined = hill_climb(
                        model,
                        &states[si],
                        signals[ui].clone(),
                        peak,
                        family,
                        params,
                        cfg,
                    )
                    .map_err(|e| ReachError::from_blowup(e, &states[si], ui))?;
                    if let Some(hit) = refined {
                        newly_refined.push(hit);
                    }
                }
            }
        }
        for (sig, norms) in newly_refined {
            for (j, &n) in norms.iter().enumerate() {
                values[ri][j] = values[ri][j].max(n);
            }
            extra_signals.push(sig);
        }

        // Carry the strongest initial states into the next radius.
        scores.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        carried = scores
            .iter()
            .take(3)
            .map(|&(_, si, _)| states[si].clone())
            .collect();
    }

    monotonize(&mut values);
    Ok(Envelope {
        r_grid: params.r_grid.clone(),
        t_grid: params.t_grid.clone(),
        values,
        family_ref: family.params().clone(),
        n_sphere: params.n_sphere,
    })
}

/// Sweeps segment values of `u` over the lattice keeping improvements of the
/// peak trajectory norm; returns the refined signal when it beats `base`.
fn hill_climb(
    model: &SystemModel,
    x: &[f64],
    mut u: Signal,
    base: f64,
    family: &DisturbanceFamily,
    params: &EnvelopeParams,
    cfg: &IntegratorConfig,
) -> Result<Option<(Signal, Vec<f64>)>, FlowError> {
    let mut best = base;
    let mut best_norms: Option<Vec<f64>> = None;
    let delta = family.delta();
    let n_seg = (family.t_family() / delta).round() as usize;
    for _ in 0..params.refine_sweeps {
        let mut improved_in_sweep = false;
        for seg in 0..=n_seg {
            let current = u.clone();
            for cand in family.lattice() {
                let trial = replace_segment(&current, seg, n_seg, delta, cand);
                if trial == u {
                    continue;
                }
                let norms = trajectory_norms(model, x, &trial, &params.t_grid, cfg)?;
                let peak = norms.iter().copied().fold(0.0, f64::max);
                if peak > best * (1.0 + 1e-12) {
                    best = peak;
                    u = trial;
                    best_norms = Some(norms);
                    improved_in_sweep = true;
                }
            }
        }
        if !improved_in_sweep {
            break;
        }
    }
    Ok(best_norms.map(|n| (u, n)))
}

/// Rebuilds `u` with grid segment `seg` (or the tail when `seg == n_seg`)
/// replaced by `value`.
fn replace_segment(u: &Signal, seg: usize, n_seg: usize, delta: f64, value: &[f64]) -> Signal {
    let mut vals: Vec<Vec<f64>> = (0..n_seg)
        .map(|i| u.value_at(i as f64 * delta).to_vec())
        .collect();
    let mut tail = u.value_at(n_seg as f64 * delta).to_vec();
    if seg < n_seg {
        vals[seg] = value.to_vec();
    } else {
        tail = value.to_vec();
    }
    let times = (1..=n_seg).map(|i| i as f64 * delta).collect();
    Signal::new(times, vals, tail).expect("grid signal is valid")
}

/// The additive reachability bound `xi(|x|) + xi(t) + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiForm {
    pub xi: MonotoneFn,
    pub c: f64,
}

impl XiForm {
    pub fn bound(&self, r: f64, t: f64) -> f64 {
        self.xi.at(r) + self.xi.at(t) + self.c
    }
}

/// Reduces a monotone envelope to the additive form via the diagonal map
/// `zeta(s) = mu(s, s) + s`, with `xi = zeta - zeta(0+)` and
/// `c = 2 zeta(0+)`.
///
/// The limit `zeta(0+)` is taken at the smallest positive grid point, which
/// biases `c` upward by at most `2 zeta(r_min)`. The result dominates the
/// envelope on all grid nodes; that contract is verified before returning.
pub fn mu_to_xi(env: &Envelope) -> Result<XiForm, ReachError> {
    env.check_monotone()?;
    let mut diag: Vec<f64> = env
        .r_grid
        .iter()
        .chain(env.t_grid.iter())
        .copied()
        .filter(|&s| s > 0.0)
        .collect();
    diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
    diag.dedup();
    if diag.is_empty() {
        return Err(ReachError::Contract("grids carry no positive point".into()));
    }

    let zeta = |s: f64| env.value_at(s, s) + s;
    let z0 = zeta(diag[0]);
    let mut knots = vec![0.0];
    let mut vals = vec![0.0];
    for &s in &diag {
        knots.push(s);
        vals.push(zeta(s) - z0);
    }
    let n = knots.len();
    let tail = ((vals[n - 1] - vals[n - 2]) / (knots[n - 1] - knots[n - 2])).max(1.0);
    let xi = MonotoneFn::from_samples(knots, vals, tail)?;
    let form = XiForm { xi, c: 2.0 * z0 };

    for (i, &r) in env.r_grid.iter().enumerate() {
        for (j, &t) in env.t_grid.iter().enumerate() {
            let mu = env.values[i][j];
            let bound = form.bound(r, t);
            if bound < mu - 1e-9 * (1.0 + mu) {
                return Err(ReachError::Contract(format!(
                    "additive form {bound:.6} fails to dominate mu({r},{t}) = {mu:.6}"
                )));
            }
        }
    }
    Ok(form)
}

/// Parameters for randomized verification of the additive bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfcCheckParams {
    pub n_cases: usize,
    pub seed: u64,
    pub r_max: f64,
    pub t_max: f64,
    pub tol_pad: f64,
}

/// Result of an additive-bound check over random cases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfcBoundReport {
    /// Largest `|phi(t,x,u)| - (xi(|x|) + xi(t) + c)` observed.
    pub max_violation: f64,
    pub worst_x_norm: f64,
    pub worst_member: usize,
    pub worst_t: f64,
    pub cases: usize,
    pub tol_pad: f64,
    pub pass: bool,
}

/// Samples `(x, u, t)` and compares the flow norm against the additive
/// bound; a blow-up is a non-RFC witness.
pub fn rfc_bound_check(
    model: &SystemModel,
    family: &DisturbanceFamily,
    xi_form: &XiForm,
    params: &RfcCheckParams,
    cfg: &IntegratorConfig,
) -> Result<RfcBoundReport, ReachError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = RfcBoundReport {
        max_violation: f64::NEG_INFINITY,
        worst_x_norm: 0.0,
        worst_member: 0,
        worst_t: 0.0,
        cases: params.n_cases,
        tol_pad: params.tol_pad,
        pass: false,
    };
    for _ in 0..params.n_cases {
        let x = sample_ball(&mut rng, model.state_dim(), params.r_max);
        let member = rng.gen_range(0..family.len());
        let u = &family.members()[member];
        let t = rng.gen_range(0.0..=params.t_max);
        let state = flow_samples(model, &x, u, &[t], cfg)
            .map_err(|e| ReachError::from_blowup(e, &x, member))?;
        let violation = state_norm(&state[0]) - xi_form.bound(state_norm(&x), t);
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_x_norm = state_norm(&x);
            report.worst_member = member;
            report.worst_t = t;
        }
    }
    report.pass = report.max_violation <= params.tol_pad;
    Ok(report)
}

/// One radius step of a divergence probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergencePoint {
    pub radius: f64,
    /// Envelope value at `(|x0|, t_probe)`; infinite when a trajectory
    /// escapes within the probe horizon.
    pub sup_estimate: f64,
}

/// Probes growth of the reachability envelope as the disturbance radius
/// increases: for each radius in the schedule, the supremum of trajectory
/// norms from the sphere `|x| = |x0|` over a fresh radius-`R` family up to
/// `t_probe`. Unbounded growth along the schedule witnesses failure of RFC
/// over the unrestricted input space.
pub fn divergence_probe(
    model: &SystemModel,
    template: &FamilyParams,
    r_schedule: &[f64],
    t_probe: f64,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<DivergencePoint>, ReachError> {
    let n_t = 32;
    let t_grid: Vec<f64> = (0..=n_t).map(|i| t_probe * i as f64 / n_t as f64).collect();
    let r0 = state_norm(x0);
    let mut out = Vec::with_capacity(r_schedule.len());
    for &radius in r_schedule {
        let mut params = template.clone();
        params.radius = radius;
        let family = sample_family(&params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(template.seed ^ 0x9e3779b97f4a7c15);
        let mut states: Vec<Vec<f64>> = vec![x0.to_vec()];
        if model.state_dim() == 1 {
            states.push(vec![-r0]);
        } else {
            for _ in 0..8 {
                let mut x = sample_ball(&mut rng, model.state_dim(), 1.0);
                let norm = state_norm(&x).max(1e-300);
                for v in &mut x {
                    *v *= r0 / norm;
                }
                states.push(x);
            }
        }
        let mut sup: f64 = 0.0;
        'outer: for x in &states {
            for u in family.members() {
                match trajectory_norms(model, x, u, &t_grid, cfg) {
                    Ok(norms) => sup = sup.max(norms.iter().copied().fold(0.0, f64::max)),
                    Err(FlowError::Blowup { .. }) => {
                        sup = f64::INFINITY;
                        break 'outer;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        out.push(DivergencePoint {
            radius,
            sup_estimate: sup,
        });
    }
    Ok(out)
}

/// Convergence diagnostic: the largest relative envelope increase when the
/// family is enlarged (doubled random members, halved grid step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub base_members: usize,
    pub refined_members: usize,
    /// `max over grid of (mu_refined - mu_base) / max(mu_base, 1e-12)`.
    pub max_relative_increase: f64,
}

/// Re-estimates the envelope with a doubled family and halved grid step and
/// reports the largest relative increase; one observable convergence step of
/// the declared under-approximation.
pub fn envelope_convergence(
    model: &SystemModel,
    family_params: &FamilyParams,
    env_params: &EnvelopeParams,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceReport, ReachError> {
    let base_family = sample_family(family_params)?;
    let mut refined_params = family_params.clone();
    refined_params.n_random *= 2;
    refined_params.delta /= 2.0;
    let refined_family = sample_family(&refined_params)?;

    let base = envelope_estimate(model, &base_family, env_params, cfg)?;
    let refined = envelope_estimate(model, &refined_family, env_params, cfg)?;
    let mut max_rel: f64 = 0.0;
    for (row_b, row_r) in base.values.iter().zip(refined.values.iter()) {
        for (&b, &r) in row_b.iter().zip(row_r) {
            max_rel = max_rel.max((r - b) / b.max(1e-12));
        }
    }
    Ok(ConvergenceReport {
        base_members: base_family.len(),
        refined_members: refined_family.len(),
        max_relative_increase: max_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn family_params(radius: f64, n_random: usize) -> FamilyParams {
        FamilyParams {
            radius,
            delta: 0.25,
            lattice_size: 3,
            n_random,
            t_family: 2.0,
            seed: 23,
            input_dim: 1,
            compact_support: false,
        }
    }

    fn grids() -> (Vec<f64>, Vec<f64>) {
        let r: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let t: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 / 9.0).collect();
        (r, t)
    }

    #[test]
    fn envelope_contraction_equals_radius() {
        let model = SystemModel::scalar_linear(-1.0);
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let mut params = EnvelopeParams::new(r_grid.clone(), t_grid.clone(), 4, 11);
        params.refine_top = 0;
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        for (i, &r) in r_grid.iter().enumerate() {
            for j in 0..t_grid.len() {
                let v = env.values()[i][j];
                assert!((v - r).abs() <= 1e-7 * r.max(1.0), "mu({r}, t_{j}) = {v}");
            }
        }
    }

    #[test]
    fn envelope_scalar_rfc_matches_exponential() {
        let model = SystemModel::scalar_rfc();
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let params = EnvelopeParams::new(r_grid.clone(), t_grid.clone(), 4, 11);
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        for (i, &r) in r_grid.iter().enumerate() {
            for (j, &t) in t_grid.iter().enumerate() {
                let expected = r * t.exp();
                let v = env.values()[i][j];
                assert!(
                    (v - expected).abs() <= 1e-4 * expected,
                    "mu({r},{t}) = {v}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn envelope_scalar_xu_attains_unit_input() {
        let model = SystemModel::scalar_xu(1.0);
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let params = EnvelopeParams::new(r_grid.clone(), t_grid.clone(), 4, 11);
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        for (i, &r) in r_grid.iter().enumerate() {
            for (j, &t) in t_grid.iter().enumerate() {
                let expected = r * t.exp();
                let v = env.values()[i][j];
                assert!(
                    (v - expected).abs() <= 1e-4 * expected,
                    "mu({r},{t}) = {v}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn envelope_at_time_zero_is_radius() {
        let model = SystemModel::decay_plus_input();
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let params = EnvelopeParams::new(r_grid.clone(), t_grid, 4, 11);
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        for (i, &r) in r_grid.iter().enumerate() {
            assert!((env.values()[i][0] - r).abs() <= 1e-9 * r.max(1.0));
        }
    }

    #[test]
    fn envelope_grows_with_family() {
        let model = SystemModel::scalar_xu(1.0);
        let small = sample_family(&family_params(1.0, 4)).unwrap();
        let large = sample_family(&family_params(1.0, 12)).unwrap();
        let (r_grid, t_grid) = grids();
        let mut params = EnvelopeParams::new(r_grid, t_grid, 4, 11);
        params.refine_top = 0;
        let env_s = envelope_estimate(&model, &small, &params, &cfg()).unwrap();
        let env_l = envelope_estimate(&model, &large, &params, &cfg()).unwrap();
        for (row_s, row_l) in env_s.values().iter().zip(env_l.values()) {
            for (&a, &b) in row_s.iter().zip(row_l) {
                assert!(b >= a - 1e-12);
            }
        }
    }

    #[test]
    fn envelope_blowup_is_witness() {
        let model = SystemModel::quadratic();
        let family = sample_family(&family_params(1.0, 2)).unwrap();
        let params = EnvelopeParams::new(vec![2.0], vec![0.0, 1.0, 2.0], 2, 5);
        let err = envelope_estimate(&model, &family, &params, &cfg()).unwrap_err();
        assert!(matches!(err, ReachError::NonRfcWitness { .. }));
    }

    fn synthetic_env(f: impl Fn(f64, f64) -> f64) -> Envelope {
        let r_grid: Vec<f64> = std::iter::once(0.0)
            .chain((0..=40).map(|i| 0.001 + 2.0 * i as f64 / 40.0))
            .collect();
        let t_grid: Vec<f64> = (0..=40).map(|i| 2.0 * i as f64 / 40.0).collect();
        let values = r_grid
            .iter()
            .map(|&r| t_grid.iter().map(|&t| f(r, t)).collect())
            .collect();
        Envelope::from_values(r_grid, t_grid, values, family_params(1.0, 0), 1).unwrap()
    }

    #[test]
    fn mu_to_xi_identity_envelope() {
        let env = synthetic_env(|r, _| r);
        let form = mu_to_xi(&env).unwrap();
        // zeta = 2r, so xi ~ 2r and c ~ 0 up to the r_min bias.
        assert!(form.c <= 0.005, "c = {}", form.c);
        for r in [0.25, 0.7, 1.5] {
            assert!((form.xi.at(r) - 2.0 * r).abs() <= 0.01);
        }
    }

    #[test]
    fn mu_to_xi_exponential_envelope() {
        let env = synthetic_env(|r, t| r * t.exp());
        let form = mu_to_xi(&env).unwrap();
        assert!(form.c <= 0.01, "c = {}", form.c);
        for r in [0.5_f64, 1.0, 1.8] {
            let expected = r * r.exp() + r;
            assert!(
                (form.xi.at(r) - expected).abs() <= 0.02 * expected,
                "xi({r}) = {}",
                form.xi.at(r)
            );
        }
    }

    #[test]
    fn mu_to_xi_affine_envelope() {
        let env = synthetic_env(|r, t| r + t + 1.0);
        let form = mu_to_xi(&env).unwrap();
        assert!((form.c - 2.0).abs() <= 0.02, "c = {}", form.c);
        for r in [0.3, 1.0, 1.9] {
            assert!((form.xi.at(r) - 3.0 * r).abs() <= 0.02);
        }
    }

    #[test]
    fn mu_to_xi_dominates_grid() {
        let model = SystemModel::scalar_rfc();
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let params = EnvelopeParams::new(r_grid, t_grid, 4, 11);
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        let form = mu_to_xi(&env).unwrap();
        for (i, &r) in env.r_grid().iter().enumerate() {
            for (j, &t) in env.t_grid().iter().enumerate() {
                assert!(form.bound(r, t) >= env.values()[i][j] - 1e-9);
            }
        }
    }

    #[test]
    fn mu_to_xi_rejects_non_monotone() {
        let r_grid = vec![0.0, 1.0, 2.0];
        let t_grid = vec![0.0, 1.0];
        let values = vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 3.0]];
        let mut env =
            Envelope::from_values(r_grid, t_grid, values, family_params(1.0, 0), 1).unwrap();
        env.values[2][1] = 0.5;
        assert!(matches!(
            mu_to_xi(&env),
            Err(ReachError::NonMonotone(_))
        ));
    }

    #[test]
    fn rfc_bound_check_scalar_rfc_passes() {
        let model = SystemModel::scalar_rfc();
        let family = sample_family(&family_params(1.0, 6)).unwrap();
        let (r_grid, t_grid) = grids();
        let params = EnvelopeParams::new(r_grid, t_grid, 4, 11);
        let env = envelope_estimate(&model, &family, &params, &cfg()).unwrap();
        let form = mu_to_xi(&env).unwrap();
        let report = rfc_bound_check(
            &model,
            &family,
            &form,
            &RfcCheckParams {
                n_cases: 300,
                seed: 9,
                r_max: 1.0,
                t_max: 2.0,
                tol_pad: 1e-6,
            },
            &cfg(),
        )
        .unwrap();
        assert!(report.pass, "max violation {}", report.max_violation);
    }

    #[test]
    fn rfc_bound_check_zero_state_passes() {
        let model = SystemModel::scalar_linear(-1.0);
        let family = sample_family(&family_params(1.0, 4)).unwrap();
        let form = XiForm {
            xi: MonotoneFn::new(vec![0.0, 1.0], vec![0.0, 2.0], 2.0).unwrap(),
            c: 0.0,
        };
        let report = rfc_bound_check(
            &model,
            &family,
            &form,
            &RfcCheckParams {
                n_cases: 200,
                seed: 4,
                r_max: 1.0,
                t_max: 2.0,
                tol_pad: 1e-9,
            },
            &cfg(),
        )
        .unwrap();
        assert!(report.pass);
    }

    #[test]
    fn divergence_probe_scalar_xu_grows() {
        let model = SystemModel::scalar_xu(4.0);
        let points = divergence_probe(
            &model,
            &family_params(1.0, 4),
            &[1.0, 2.0, 4.0],
            1.0,
            &[1.0],
            &cfg(),
        )
        .unwrap();
        for (p, expected) in points.iter().zip([1.0_f64, 2.0, 4.0]) {
            let e = expected.exp();
            assert!(
                (p.sup_estimate - e).abs() <= 1e-4 * e,
                "R = {}: {} vs {e}",
                p.radius,
                p.sup_estimate
            );
        }
    }

    #[test]
    fn divergence_probe_scalar_rfc_flat() {
        let model = SystemModel::scalar_rfc();
        let points = divergence_probe(
            &model,
            &family_params(1.0, 4),
            &[1.0, 2.0, 4.0],
            1.0,
            &[1.0],
            &cfg(),
        )
        .unwrap();
        let e = 1.0_f64.exp();
        for p in &points {
            assert!((p.sup_estimate - e).abs() <= 1e-4 * e);
        }
    }

    #[test]
    fn divergence_probe_contraction_constant() {
        let model = SystemModel::scalar_linear(-1.0);
        let points = divergence_probe(
            &model,
            &family_params(1.0, 4),
            &[1.0, 2.0, 4.0],
            1.0,
            &[1.0],
            &cfg(),
        )
        .unwrap();
        for p in &points {
            assert!(p.sup_estimate <= 1.0 + 1e-9);
        }
    }
}
