//! Comparison-function algebra.
//!
//! All class-K/K-infinity objects used by the certification pipeline live in a
//! single representation: [`MonotoneFn`], a strictly increasing continuous
//! piecewise-linear function on `[0, inf)` with a linear tail. The module also
//! provides the clipping family `G_k : r -> max(r - 1/k, 0)` and the
//! infimal-convolution construction of a unit-Lipschitz K-infinity lower
//! bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum slope between consecutive knots. Numerically flat segments break
/// inversion, so constructors lift degenerate samples to this floor.
pub const MIN_SLOPE: f64 = 1e-12;

/// Default knot count for function-sampling constructors.
pub const DEFAULT_KNOTS: usize = 512;

/// Default domain upper end for function-sampling constructors.
pub const DEFAULT_S_MAX: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KfunError {
    #[error("argument {0} is negative; domain is [0, inf)")]
    NegativeArgument(f64),
    #[error("value {y} is below the function range (minimum {min})")]
    BelowRange { y: f64, min: f64 },
    #[error("function is not class K-infinity (value at zero is {0})")]
    NotKinf(f64),
    #[error("invalid construction: {0}")]
    Construction(String),
}

/// A strictly increasing continuous piecewise-linear function on `[0, inf)`.
///
/// Knots are a finite ascending sequence of abscissas starting at 0; beyond
/// the last knot the function continues linearly with `tail_slope > 0`, so it
/// is strictly increasing and unbounded on the whole half-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MonotoneFnRepr", into = "MonotoneFnRepr")]
pub struct MonotoneFn {
    knots: Vec<f64>,
    values: Vec<f64>,
    tail_slope: f64,
}

/// Wire form: `{knots, values, tail_slope, s_max}`.
#[derive(Serialize, Deserialize)]
struct MonotoneFnRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
    tail_slope: f64,
    s_max: f64,
}

impl From<MonotoneFn> for MonotoneFnRepr {
    fn from(f: MonotoneFn) -> Self {
        let s_max = f.s_max();
        MonotoneFnRepr {
            knots: f.knots,
            values: f.values,
            tail_slope: f.tail_slope,
            s_max,
        }
    }
}

impl TryFrom<MonotoneFnRepr> for MonotoneFn {
    type Error = KfunError;
    fn try_from(r: MonotoneFnRepr) -> Result<Self, KfunError> {
        MonotoneFn::new(r.knots, r.values, r.tail_slope)
    }
}

impl MonotoneFn {
    /// Builds a function from explicit knots and ordinates.
    ///
    /// Requires `knots[0] == 0`, strictly ascending knots, per-segment slopes
    /// of at least [`MIN_SLOPE`], and `tail_slope > 0`.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, tail_slope: f64) -> Result<Self, KfunError> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(KfunError::Construction(format!(
                "need matching nonempty knots/values, got {}/{}",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(KfunError::Construction(format!(
                "first knot must be 0, got {}",
                knots[0]
            )));
        }
        if !(tail_slope > 0.0) || !tail_slope.is_finite() {
            return Err(KfunError::Construction(format!(
                "tail_slope must be positive and finite, got {tail_slope}"
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(KfunError::Construction(format!(
                    "knots not strictly ascending at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for i in 1..values.len() {
            let dv = values[i] - values[i - 1];
            let dk = knots[i] - knots[i - 1];
            if !(dv >= MIN_SLOPE * dk) || !dv.is_finite() {
                return Err(KfunError::Construction(format!(
                    "segment {} has slope below the {MIN_SLOPE} floor",
                    i - 1
                )));
            }
        }
        Ok(MonotoneFn {
            knots,
            values,
            tail_slope,
        })
    }

    /// Builds a function from sampled ordinates, lifting any flat or
    /// decreasing segment to the [`MIN_SLOPE`] floor.
    pub fn from_samples(
        knots: Vec<f64>,
        mut values: Vec<f64>,
        tail_slope: f64,
    ) -> Result<Self, KfunError> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(KfunError::Construction(
                "need matching nonempty knots/values".into(),
            ));
        }
        for i in 1..values.len() {
            let floor = values[i - 1] + MIN_SLOPE * (knots[i] - knots[i - 1]);
            if values[i] < floor {
                values[i] = floor;
            }
        }
        Self::new(knots, values, tail_slope.max(MIN_SLOPE))
    }

    /// Samples `f` on a log-spaced grid over `[0, s_max]`.
    ///
    /// K-infinity objects in this pipeline grow quickly, so relative
    /// resolution near zero matters more than uniform coverage. The tail slope
    /// is taken from the last sampled segment.
    pub fn from_fn(
        f: impl Fn(f64) -> f64,
        s_max: f64,
        n_knots: usize,
    ) -> Result<Self, KfunError> {
        if n_knots < 3 || !(s_max > 0.0) {
            return Err(KfunError::Construction(
                "need n_knots >= 3 and s_max > 0".into(),
            ));
        }
        let s_min = s_max * 1e-9;
        let mut knots = Vec::with_capacity(n_knots);
        knots.push(0.0);
        let ratio = (s_max / s_min).ln() / (n_knots - 2) as f64;
        for i in 0..n_knots - 1 {
            knots.push(s_min * (ratio * i as f64).exp());
        }
        let values: Vec<f64> = knots.iter().map(|&s| f(s)).collect();
        let n = knots.len();
        let tail = (values[n - 1] - values[n - 2]) / (knots[n - 1] - knots[n - 2]);
        Self::from_samples(knots, values, tail)
    }

    /// Samples `f` on a uniform grid over `[0, s_max]` with the given step
    /// count; the tail slope is taken from the last segment.
    pub fn from_fn_uniform(
        f: impl Fn(f64) -> f64,
        s_max: f64,
        n_knots: usize,
    ) -> Result<Self, KfunError> {
        if n_knots < 2 || !(s_max > 0.0) {
            return Err(KfunError::Construction(
                "need n_knots >= 2 and s_max > 0".into(),
            ));
        }
        let h = s_max / (n_knots - 1) as f64;
        let knots: Vec<f64> = (0..n_knots).map(|i| i as f64 * h).collect();
        let values: Vec<f64> = knots.iter().map(|&s| f(s)).collect();
        let tail = (values[n_knots - 1] - values[n_knots - 2]) / h;
        Self::from_samples(knots, values, tail)
    }

    /// The identity function.
    pub fn identity() -> Self {
        MonotoneFn {
            knots: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
            tail_slope: 1.0,
        }
    }

    /// A constant-plus-floor function `s -> c + MIN_SLOPE * s`, the strictly
    /// increasing stand-in for a constant bound.
    pub fn near_constant(c: f64) -> Self {
        MonotoneFn {
            knots: vec![0.0, 1.0],
            values: vec![c, c + MIN_SLOPE],
            tail_slope: MIN_SLOPE,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Last knot abscissa; the function is tabulated on `[0, s_max]` and
    /// linear beyond.
    pub fn s_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn value_at_zero(&self) -> f64 {
        self.values[0]
    }

    /// True when the function qualifies as class K-infinity: zero at zero
    /// (strict increase and unboundedness hold by construction).
    pub fn is_kinf(&self) -> bool {
        self.values[0] == 0.0
    }

    /// Evaluates at `s >= 0`, checking the domain.
    pub fn eval(&self, s: f64) -> Result<f64, KfunError> {
        if !(s >= 0.0) {
            return Err(KfunError::NegativeArgument(s));
        }
        Ok(self.at(s))
    }

    /// Evaluates at a known-nonnegative argument.
    pub fn at(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0, "MonotoneFn argument must be nonnegative");
        let n = self.knots.len();
        if s >= self.knots[n - 1] {
            return self.values[n - 1] + self.tail_slope * (s - self.knots[n - 1]);
        }
        // First knot strictly above s; s < last knot, so 1 <= i <= n-1.
        let i = self.knots.partition_point(|&k| k <= s);
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (s - k0) / (k1 - k0)
    }

    /// Solves `f(s) = y` for `s >= 0`; errors when `y` is below `f(0)`.
    pub fn invert(&self, y: f64) -> Result<f64, KfunError> {
        if !(y >= self.values[0]) {
            return Err(KfunError::BelowRange {
                y,
                min: self.values[0],
            });
        }
        let n = self.values.len();
        if y >= self.values[n - 1] {
            return Ok(self.knots[n - 1] + (y - self.values[n - 1]) / self.tail_slope);
        }
        let i = self.values.partition_point(|&v| v <= y);
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        Ok(k0 + (k1 - k0) * (y - v0) / (v1 - v0))
    }

    /// The inverse function as a first-class object; defined for K-infinity
    /// inputs (the inverse domain must again start at 0).
    pub fn inverse(&self) -> Result<MonotoneFn, KfunError> {
        if !self.is_kinf() {
            return Err(KfunError::NotKinf(self.values[0]));
        }
        MonotoneFn::new(
            self.values.clone(),
            self.knots.clone(),
            1.0 / self.tail_slope,
        )
    }

    /// Largest slope over all segments including the tail.
    pub fn max_slope(&self) -> f64 {
        let mut m = self.tail_slope;
        for i in 1..self.knots.len() {
            let s = (self.values[i] - self.values[i - 1]) / (self.knots[i] - self.knots[i - 1]);
            if s > m {
                m = s;
            }
        }
        m
    }
}

/// The clipping function `G_k : r -> max(r - 1/k, 0)` for a positive index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GkFn {
    k: u32,
}

impl GkFn {
    pub fn new(k: u32) -> Self {
        assert!(k >= 1, "clipping index must be positive");
        GkFn { k }
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        (r - 1.0 / self.k as f64).max(0.0)
    }
}

/// `max(r - 1/k, 0)`.
pub fn gk_eval(k: u32, r: f64) -> f64 {
    GkFn::new(k).eval(r)
}

/// The largest unit-Lipschitz K-infinity minorant of `alpha`, realized as the
/// infimal convolution `rho(s) = inf over sigma in [0,s] of
/// (alpha(sigma) + s - sigma)`.
///
/// For piecewise-linear `alpha` the infimum is attained at a knot or at `s`
/// itself, so the envelope is computed exactly by walking segments of
/// `g(sigma) = alpha(sigma) - sigma` and tracking its running minimum `m`;
/// then `rho(s) = s + m(s)`. Crossing points where `g` re-enters the running
/// minimum become new knots.
pub fn lipschitz_lower_bound(alpha: &MonotoneFn) -> Result<MonotoneFn, KfunError> {
    if !alpha.is_kinf() {
        return Err(KfunError::NotKinf(alpha.value_at_zero()));
    }
    let knots = alpha.knots();
    let values = alpha.values();
    let n = knots.len();

    let mut out_k: Vec<f64> = vec![0.0];
    let mut out_v: Vec<f64> = vec![0.0];
    let mut m = 0.0_f64; // running min of g; g(0) = 0 for K-infinity alpha
    let push = |k: f64, v: f64, ok: &mut Vec<f64>, ov: &mut Vec<f64>| {
        if k > *ok.last().unwrap() {
            ok.push(k);
            ov.push(v);
        }
    };

    for i in 0..n - 1 {
        let (k0, k1) = (knots[i], knots[i + 1]);
        let g0 = values[i] - k0;
        let g1 = values[i + 1] - k1;
        if g1 >= m {
            // g stays at or above the running minimum: rho has slope 1 here.
            push(k1, k1 + m, &mut out_k, &mut out_v);
        } else if g0 <= m {
            // g is already at the minimum and decreasing: rho follows alpha.
            m = g1;
            push(k1, values[i + 1], &mut out_k, &mut out_v);
        } else {
            // g dips below m inside the segment: slope-1 piece, then alpha.
            let slope_g = (g1 - g0) / (k1 - k0);
            let s_cross = k0 + (m - g0) / slope_g;
            push(s_cross, s_cross + m, &mut out_k, &mut out_v);
            m = g1;
            push(k1, values[i + 1], &mut out_k, &mut out_v);
        }
    }

    let tail_g_slope = alpha.tail_slope - 1.0;
    let g_last = values[n - 1] - knots[n - 1];
    let tail = if tail_g_slope >= 0.0 {
        1.0
    } else if g_last <= m {
        alpha.tail_slope
    } else {
        // One more crossing in the tail before rho follows alpha for good.
        let s_cross = knots[n - 1] + (m - g_last) / tail_g_slope;
        push(s_cross, s_cross + m, &mut out_k, &mut out_v);
        alpha.tail_slope
    };

    MonotoneFn::from_samples(out_k, out_v, tail)
}

/// Truth of the K-infinity splitting inequality
/// `alpha(a + b + c) <= alpha(3a) + alpha(3b) + alpha(3c)`.
///
/// Always true for class-K-infinity `alpha`; exposed as a self-test.
pub fn triangle_split_check(alpha: &MonotoneFn, a: f64, b: f64, c: f64) -> bool {
    debug_assert!(a >= 0.0 && b >= 0.0 && c >= 0.0);
    alpha.at(a + b + c) <= alpha.at(3.0 * a) + alpha.at(3.0 * b) + alpha.at(3.0 * c)
}
