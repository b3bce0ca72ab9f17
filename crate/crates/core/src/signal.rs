//! Piecewise-constant input and disturbance signals.
//!
//! A [`Signal`] is right-continuous and defined on all of `[0, inf)`: finitely
//! many switches, one value vector per interval, and a tail value held
//! forever after the last switch. The module provides the shift and
//! concatenation operators, the sup and Lp norms, and finite
//! [`DisturbanceFamily`] samples of the norm ball of admissible inputs.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid signal: {0}")]
    Construction(String),
    #[error("unsupported signal for this norm: {0}")]
    UnsupportedSignal(String),
    #[error("invalid family: {0}")]
    Family(String),
}

/// Max-norm on an input value vector; the pointwise norm used for signal
/// norms and lattice radii.
pub fn value_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A piecewise-constant, right-continuous signal on `[0, inf)`.
///
/// Segment `i` covers `[switch_times[i-1], switch_times[i])` (with the first
/// starting at 0) and carries `values[i]`; `tail` is held from the last
/// switch onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    switch_times: Vec<f64>,
    values: Vec<Vec<f64>>,
    tail: Vec<f64>,
}

impl Signal {
    pub fn new(
        switch_times: Vec<f64>,
        values: Vec<Vec<f64>>,
        tail: Vec<f64>,
    ) -> Result<Self, SignalError> {
        if tail.is_empty() {
            return Err(SignalError::Construction(
                "value dimension must be positive".into(),
            ));
        }
        if switch_times.len() != values.len() {
            return Err(SignalError::Construction(format!(
                "{} switch times vs {} segment values",
                switch_times.len(),
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &switch_times {
            if !(t > prev) || !t.is_finite() {
                return Err(SignalError::Construction(format!(
                    "switch times must be strictly ascending and positive, got {t} after {prev}"
                )));
            }
            prev = t;
        }
        for v in values.iter().chain(std::iter::once(&tail)) {
            if v.len() != tail.len() {
                return Err(SignalError::Construction(
                    "all value vectors must share one dimension".into(),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SignalError::Construction("non-finite value".into()));
            }
        }
        let mut s = Signal {
            switch_times,
            values,
            tail,
        };
        s.canonicalize();
        Ok(s)
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Signal::new(vec![], vec![], value).expect("constant signal is always valid")
    }

    pub fn zero(dim: usize) -> Self {
        Signal::constant(vec![0.0; dim])
    }

    /// Merges adjacent equal segments and drops trailing segments equal to
    /// the tail, so pointwise-equal signals compare equal structurally.
    fn canonicalize(&mut self) {
        while let Some(last) = self.values.last() {
            if *last == self.tail {
                self.values.pop();
                self.switch_times.pop();
            } else {
                break;
            }
        }
        let mut i = 1;
        while i < self.values.len() {
            if self.values[i] == self.values[i - 1] {
                self.values.remove(i);
                self.switch_times.remove(i - 1);
            } else {
                i += 1;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.tail.len()
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn segment_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn tail_value(&self) -> &[f64] {
        &self.tail
    }

    /// Pointwise value at `t >= 0` (right-continuous).
    pub fn value_at(&self, t: f64) -> &[f64] {
        debug_assert!(t >= 0.0);
        let i = self.switch_times.partition_point(|&st| st <= t);
        if i < self.values.len() {
            &self.values[i]
        } else {
            &self.tail
        }
    }

    /// Value on the interval immediately before `t > 0` (the left limit).
    fn value_before(&self, t: f64) -> &[f64] {
        let i = self.switch_times.partition_point(|&st| st < t);
        if i < self.values.len() {
            &self.values[i]
        } else {
            &self.tail
        }
    }

    /// Essential supremum of the pointwise norm; exact for piecewise-constant
    /// signals as the max over segment and tail values.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| value_norm(v))
            .fold(value_norm(&self.tail), f64::max)
    }

    /// Sup norm of the restriction to `[0, t_end)`.
    pub fn sup_norm_on(&self, t_end: f64) -> f64 {
        let mut m: f64 = 0.0;
        let mut start = 0.0;
        for (i, &st) in self.switch_times.iter().enumerate() {
            if start >= t_end {
                return m;
            }
            m = m.max(value_norm(&self.values[i]));
            start = st;
        }
        if start < t_end {
            m = m.max(value_norm(&self.tail));
        }
        m
    }

    /// Lp norm for `p >= 1`; requires compact support (zero tail).
    pub fn lp_norm(&self, p: f64) -> Result<f64, SignalError> {
        if !(p >= 1.0) {
            return Err(SignalError::UnsupportedSignal(format!(
                "Lp norm needs p >= 1, got {p}"
            )));
        }
        if self.tail.iter().any(|&x| x != 0.0) {
            return Err(SignalError::UnsupportedSignal(
                "Lp norm requires a zero tail (compact support)".into(),
            ));
        }
        let mut acc = 0.0;
        let mut start = 0.0;
        for (i, &st) in self.switch_times.iter().enumerate() {
            acc += value_norm(&self.values[i]).powf(p) * (st - start);
            start = st;
        }
        Ok(acc.powf(1.0 / p))
    }

    /// The time shift `s -> u(s + tau)`.
    pub fn shift(&self, tau: f64) -> Signal {
        debug_assert!(tau >= 0.0);
        let first_kept = self.switch_times.partition_point(|&st| st <= tau);
        let switch_times: Vec<f64> = self.switch_times[first_kept..]
            .iter()
            .map(|&st| st - tau)
            .collect();
        let values = self.values[first_kept..].to_vec();
        Signal::new(switch_times, values, self.tail.clone())
            .expect("shift of a valid signal is valid")
    }

    /// Concatenation at `t > 0`: this signal on `[0, t)`, then `other(. - t)`.
    pub fn concat(&self, other: &Signal, t: f64) -> Result<Signal, SignalError> {
        if !(t > 0.0) {
            return Err(SignalError::Construction(format!(
                "concatenation time must be positive, got {t}"
            )));
        }
        if self.dim() != other.dim() {
            return Err(SignalError::Construction(
                "dimension mismatch in concatenation".into(),
            ));
        }
        let mut switch_times = Vec::new();
        let mut values = Vec::new();
        for (i, &st) in self.switch_times.iter().enumerate() {
            if st >= t {
                break;
            }
            switch_times.push(st);
            values.push(self.values[i].clone());
        }
        switch_times.push(t);
        values.push(self.value_before(t).to_vec());
        for (i, &st) in other.switch_times.iter().enumerate() {
            switch_times.push(st + t);
            values.push(other.values[i].clone());
        }
        Signal::new(switch_times, values, other.tail.clone())
    }
}

/// Which signal norm a check runs under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "lowercase")]
pub enum NormKind {
    Sup,
    Lp(f64),
}

impl NormKind {
    pub fn norm_of(&self, u: &Signal) -> Result<f64, SignalError> {
        match self {
            NormKind::Sup => Ok(u.sup_norm()),
            NormKind::Lp(p) => u.lp_norm(*p),
        }
    }
}

/// Parameters defining a sampled disturbance family; equal parameter sets
/// reproduce identical families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Input-norm radius of the approximated ball.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Time grid step; switches of all members lie on multiples of it.
    pub delta: f64,
    /// Per-axis lattice point count over `[-R, R]`.
    pub lattice_size: usize,
    /// Number of random members in addition to the lattice constants.
    pub n_random: usize,
    /// Largest time carrying non-tail switches.
    pub t_family: f64,
    pub seed: u64,
    pub input_dim: usize,
    /// Force zero tails so every member has compact support (for Lp checks).
    #[serde(default)]
    pub compact_support: bool,
}

/// A finite set of lattice-valued grid signals approximating the disturbance
/// ball of radius `R`.
///
/// Members are constants at every lattice value plus `n_random` seeded random
/// grid signals. Construction keeps every member on the `delta`-grid with
/// lattice values, so shifts by grid multiples and concatenations at grid
/// times stay inside the same lattice-valued grid class with norm at most
/// `R`; [`closure_check`] verifies this over all member pairs. Suprema taken
/// over the family are under-approximations of suprema over the full ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceFamily {
    params: FamilyParams,
    lattice: Vec<Vec<f64>>,
    members: Vec<Signal>,
}

impl DisturbanceFamily {
    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn radius(&self) -> f64 {
        self.params.radius
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    pub fn t_family(&self) -> f64 {
        self.params.t_family
    }

    pub fn lattice(&self) -> &[Vec<f64>] {
        &self.lattice
    }

    pub fn members(&self) -> &[Signal] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    /// Grid times `delta, 2*delta, ..., <= t_family`.
    pub fn grid_times(&self) -> Vec<f64> {
        let n = (self.params.t_family / self.params.delta).round() as usize;
        (1..=n).map(|i| i as f64 * self.params.delta).collect()
    }
}

fn lattice_axis(radius: f64, lattice_size: usize) -> Vec<f64> {
    if lattice_size <= 1 || radius == 0.0 {
        return vec![0.0];
    }
    let n = lattice_size;
    (0..n)
        .map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64)
        .collect()
}

fn lattice_product(axis: &[f64], dim: usize) -> Result<Vec<Vec<f64>>, SignalError> {
    let count = axis.len().checked_pow(dim as u32).unwrap_or(usize::MAX);
    if count > 4096 {
        return Err(SignalError::Family(format!(
            "value lattice too large: {count} points"
        )));
    }
    let mut points = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &a in axis {
                let mut q = p.clone();
                q.push(a);
                next.push(q);
            }
        }
        points = next;
    }
    Ok(points)
}

/// Samples a disturbance family: one constant per lattice value plus
/// `n_random` random lattice-valued grid signals, deterministic in the seed.
///
/// A zero radius collapses to the single zero signal. Growing `n_random`
/// with a fixed seed extends the family without changing earlier members.
pub fn sample_family(params: &FamilyParams) -> Result<DisturbanceFamily, SignalError> {
    if !(params.radius >= 0.0) || !params.radius.is_finite() {
        return Err(SignalError::Family(format!(
            "family radius must be finite and nonnegative, got {}; \
             unbounded input sets are probed through finite radius schedules",
            params.radius
        )));
    }
    if !(params.delta > 0.0) {
        return Err(SignalError::Family("delta must be positive".into()));
    }
    if params.input_dim == 0 {
        return Err(SignalError::Family("input_dim must be positive".into()));
    }
    if params.radius == 0.0 {
        return Ok(DisturbanceFamily {
            params: params.clone(),
            lattice: vec![vec![0.0; params.input_dim]],
            members: vec![Signal::zero(params.input_dim)],
        });
    }

    let axis = lattice_axis(params.radius, params.lattice_size);
    let lattice = lattice_product(&axis, params.input_dim)?;
    let mut members: Vec<Signal> = Vec::with_capacity(lattice.len() + params.n_random);
    for v in &lattice {
        if params.compact_support {
            members.push(
                Signal::new(
                    vec![params.t_family.max(params.delta)],
                    vec![v.clone()],
                    vec![0.0; params.input_dim],
                )
                .expect("lattice indicator is valid"),
            );
        } else {
            members.push(Signal::constant(v.clone()));
        }
    }

    let n_seg = (params.t_family / params.delta).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.n_random {
        let mut values = Vec::with_capacity(n_seg);
        for _ in 0..n_seg {
            values.push(lattice[rng.gen_range(0..lattice.len())].clone());
        }
        let tail = if params.compact_support {
            vec![0.0; params.input_dim]
        } else {
            lattice[rng.gen_range(0..lattice.len())].clone()
        };
        let switch_times = (1..=n_seg).map(|i| i as f64 * params.delta).collect();
        members.push(Signal::new(switch_times, values, tail)?);
    }

    Ok(DisturbanceFamily {
        params: params.clone(),
        lattice,
        members,
    })
}

/// Outcome of a concatenation-closure scan over a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosureReport {
    pub norm: NormKind,
    pub closed: bool,
    pub witness: Option<ClosureWitness>,
    pub pairs_checked: usize,
}

/// Member indices and concatenation time whose concatenation leaves the
/// ball, with the offending norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosureWitness {
    pub first: usize,
    pub second: usize,
    pub time: f64,
    pub concat_norm: f64,
}

/// Scans all member pairs and grid concatenation times, reporting whether
/// every concatenation stays inside the radius-`R` ball under the given norm.
///
/// Sup-norm balls are closed under concatenation; Lp balls with finite
/// positive radius generally are not, and the first escaping pair is
/// returned as a witness.
pub fn closure_check(
    family: &DisturbanceFamily,
    norm: NormKind,
) -> Result<ClosureReport, SignalError> {
    let radius = family.radius();
    let times = family.grid_times();
    let mut pairs_checked = 0;
    for (i, u1) in family.members().iter().enumerate() {
        for (j, u2) in family.members().iter().enumerate() {
            for &t in &times {
                pairs_checked += 1;
                let w = u1.concat(u2, t)?;
                let n = norm.norm_of(&w)?;
                if n > radius * (1.0 + 1e-12) {
                    return Ok(ClosureReport {
                        norm,
                        closed: false,
                        witness: Some(ClosureWitness {
                            first: i,
                            second: j,
                            time: t,
                            concat_norm: n,
                        }),
                        pairs_checked,
                    });
                }
            }
        }
    }
    Ok(ClosureReport {
        norm,
        closed: true,
        witness: None,
        pairs_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(switches: Vec<f64>, values: Vec<f64>, tail: f64) -> Signal {
        Signal::new(
            switches,
            values.into_iter().map(|v| vec![v]).collect(),
            vec![tail],
        )
        .unwrap()
    }

    #[test]
    fn sup_norm_constant() {
        assert_eq!(Signal::constant(vec![2.0]).sup_norm(), 2.0);
    }

    #[test]
    fn sup_norm_segments() {
        let u = sig(vec![1.0], vec![1.0], -3.0);
        assert_eq!(u.sup_norm(), 3.0);
        let u = sig(vec![1.0, 2.0], vec![1.0, -3.0], 0.0);
        assert_eq!(u.sup_norm(), 3.0);
    }

    #[test]
    fn l1_norm_indicator() {
        let ind = sig(vec![1.0], vec![1.0], 0.0);
        assert_eq!(ind.lp_norm(1.0).unwrap(), 1.0);
    }

    #[test]
    fn lp_norm_rejects_persistent_signal() {
        let u = Signal::constant(vec![1.0]);
        assert!(matches!(
            u.lp_norm(1.0),
            Err(SignalError::UnsupportedSignal(_))
        ));
    }

    #[test]
    fn shift_of_constant_is_fixed() {
        let u = Signal::constant(vec![4.0]);
        assert_eq!(u.shift(5.0), u);
    }

    #[test]
    fn shift_reindexes_switches() {
        let u = sig(vec![1.0], vec![2.0], 5.0);
        let s = u.shift(0.5);
        assert_eq!(s.switch_times(), &[0.5]);
        assert_eq!(s.value_at(0.0), &[2.0]);
        assert_eq!(s.value_at(0.5), &[5.0]);
        // Shift past every switch leaves the tail constant.
        assert_eq!(u.shift(2.0), Signal::constant(vec![5.0]));
    }

    #[test]
    fn concat_basic() {
        let u1 = Signal::constant(vec![1.0]);
        let u2 = Signal::constant(vec![2.0]);
        let w = u1.concat(&u2, 1.0).unwrap();
        assert_eq!(w.value_at(0.0), &[1.0]);
        assert_eq!(w.value_at(0.999), &[1.0]);
        assert_eq!(w.value_at(1.0), &[2.0]);
        assert_eq!(w.value_at(10.0), &[2.0]);
    }

    #[test]
    fn concat_l1_additivity() {
        let ind = sig(vec![1.0], vec![1.0], 0.0);
        let w = ind.concat(&ind, 1.0).unwrap();
        assert_eq!(w.lp_norm(1.0).unwrap(), 2.0);
    }

    #[test]
    fn concat_sup_is_pointwise_max() {
        let u1 = sig(vec![0.5], vec![3.0], 0.5);
        let u2 = sig(vec![2.0], vec![-1.0], 0.25);
        for t in [0.25, 0.75, 2.0] {
            let w = u1.concat(&u2, t).unwrap();
            let expected = u1.sup_norm_on(t).max(u2.sup_norm());
            assert_eq!(w.sup_norm(), expected);
        }
    }

    #[test]
    fn concat_then_shift_recovers_second() {
        let u1 = sig(vec![0.5, 1.5], vec![1.0, -1.0], 0.0);
        let u2 = sig(vec![0.25], vec![2.0], -2.0);
        for t in [0.25, 1.0, 3.0] {
            let w = u1.concat(&u2, t).unwrap();
            let shifted = w.shift(t);
            for s in [0.0, 0.1, 0.25, 0.5, 2.0, 7.0] {
                assert_eq!(shifted.value_at(s), u2.value_at(s), "t={t} s={s}");
            }
        }
    }

    fn params(radius: f64, n_random: usize, seed: u64) -> FamilyParams {
        FamilyParams {
            radius,
            delta: 0.25,
            lattice_size: 3,
            n_random,
            t_family: 1.0,
            seed,
            input_dim: 1,
            compact_support: false,
        }
    }

    #[test]
    fn zero_radius_family_is_zero_signal() {
        let f = sample_family(&params(0.0, 10, 3)).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.members()[0], Signal::zero(1));
    }

    #[test]
    fn family_counts_and_norms() {
        let f = sample_family(&params(1.0, 10, 7)).unwrap();
        assert_eq!(f.len(), 13);
        for u in f.members() {
            assert!(u.sup_norm() <= 1.0);
        }
    }

    #[test]
    fn family_is_deterministic() {
        let a = sample_family(&params(1.0, 10, 7)).unwrap();
        let b = sample_family(&params(1.0, 10, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn family_nested_when_n_random_grows() {
        let a = sample_family(&params(1.0, 5, 7)).unwrap();
        let b = sample_family(&params(1.0, 10, 7)).unwrap();
        assert_eq!(&b.members()[..a.len()], a.members());
    }

    #[test]
    fn shift_contract_over_family() {
        let f = sample_family(&params(1.0, 10, 7)).unwrap();
        for u in f.members() {
            for &tau in &f.grid_times() {
                assert!(u.shift(tau).sup_norm() <= u.sup_norm());
            }
        }
    }

    #[test]
    fn grid_closure_of_concatenations() {
        let f = sample_family(&params(1.0, 10, 7)).unwrap();
        let delta = f.delta();
        for u1 in f.members() {
            for u2 in f.members() {
                for &t in &f.grid_times() {
                    let w = u1.concat(u2, t).unwrap();
                    assert!(w.sup_norm() <= f.radius());
                    for &st in w.switch_times() {
                        let m = st / delta;
                        assert!((m - m.round()).abs() < 1e-9, "off-grid switch {st}");
                    }
                    for v in w.segment_values() {
                        assert!(f.lattice().contains(v));
                    }
                }
            }
        }
    }

    #[test]
    fn closure_sup_is_closed() {
        let f = sample_family(&params(1.0, 10, 7)).unwrap();
        let report = closure_check(&f, NormKind::Sup).unwrap();
        assert!(report.closed);
        assert!(report.witness.is_none());
    }

    #[test]
    fn closure_l1_has_witness() {
        let mut p = params(1.0, 4, 7);
        p.compact_support = true;
        p.delta = 1.0;
        p.t_family = 1.0;
        let f = sample_family(&p).unwrap();
        // The indicator of [0,1) at value 1 is a lattice member.
        assert!(f
            .members()
            .iter()
            .any(|u| u.value_at(0.5) == [1.0] && u.value_at(1.5) == [0.0]));
        let report = closure_check(&f, NormKind::Lp(1.0)).unwrap();
        assert!(!report.closed);
        let w = report.witness.unwrap();
        assert!(w.concat_norm > 1.0);
    }

    #[test]
    fn closure_zero_family_closed_for_any_norm() {
        let f = sample_family(&params(0.0, 3, 1)).unwrap();
        assert!(closure_check(&f, NormKind::Sup).unwrap().closed);
        assert!(closure_check(&f, NormKind::Lp(1.0)).unwrap().closed);
    }

    #[test]
    fn signal_json_shape() {
        let u = sig(vec![1.0], vec![2.0], 0.0);
        let j = serde_json::to_value(&u).unwrap();
        assert_eq!(j["switch_times"], serde_json::json!([1.0]));
        assert_eq!(j["values"], serde_json::json!([[2.0]]));
        assert_eq!(j["tail"], serde_json::json!([0.0]));
        let f = sample_family(&params(1.0, 2, 9)).unwrap();
        let j = serde_json::to_value(&f).unwrap();
        assert_eq!(j["params"]["R"], serde_json::json!(1.0));
        assert!(j["lattice"].is_array());
    }
}
