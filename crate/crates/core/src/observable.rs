//! Fully observable customers: threshold strategies, per-state sojourn times,
//! closed-form stationary distribution under a threshold policy, and social
//! optimization over integer threshold pairs.
//!
//! The closed form expresses all stationary masses through the roots of the
//! vacation-level characteristic equation and a handful of coefficients; the
//! direct linear solve of the same finite chain serves as its oracle and as
//! the fallback for shapes the closed form does not cover.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::chain;
use crate::error::{Error, Result};
use crate::model::{busy_traffic_ratio, EconParams, QueueParams, ServerPhase, SystemState};
use crate::numeric::bisect_decreasing;

/// Pure threshold strategy: join at `(n, j)` iff `n <= threshold(j)`.
/// The value -1 encodes "never join in this phase".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPair {
    pub n0: i64,
    pub n1: i64,
}

impl ThresholdPair {
    pub fn new(n0: i64, n1: i64) -> Result<Self> {
        if n0 < -1 {
            return Err(Error::InvalidParameter {
                name: "n0",
                value: n0 as f64,
                domain: "an integer >= -1",
            });
        }
        if n1 < -1 {
            return Err(Error::InvalidParameter {
                name: "n1",
                value: n1 as f64,
                domain: "an integer >= -1",
            });
        }
        Ok(Self { n0, n1 })
    }

    pub fn threshold(&self, phase: ServerPhase) -> i64 {
        match phase {
            ServerPhase::Vacation => self.n0,
            ServerPhase::Busy => self.n1,
        }
    }

    /// Join rule applied to an observed snapshot.
    pub fn admits(&self, state: SystemState) -> bool {
        (state.count as i64) <= self.threshold(state.phase)
    }
}

/// Roots of the vacation-level characteristic equation
/// `t_bar p_bar mu_v x^2 - (theta + t_bar p mu_v_bar + t_bar p_bar mu_v) x
///  + t_bar p mu_v_bar = 0`, with `x2 < 1 < x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoots {
    pub x1: f64,
    pub x2: f64,
}

/// Quadratic coefficients of the characteristic equation as `(a2, a1, a0)`
/// in `a2 x^2 - a1 x + a0 = 0`.
fn characteristic_coeffs(params: &QueueParams) -> (f64, f64, f64) {
    let QueueParams { p, mu_v, theta, .. } = *params;
    let a2 = (1.0 - theta) * (1.0 - p) * mu_v;
    let a0 = (1.0 - theta) * p * (1.0 - mu_v);
    let a1 = theta + a0 + a2;
    (a2, a1, a0)
}

/// Stable evaluation: the large root directly, the small one via the product
/// identity `x1 x2 = p mu_v_bar / (p_bar mu_v)` to avoid cancellation.
pub fn characteristic_roots(params: &QueueParams) -> Result<CharacteristicRoots> {
    let (a2, a1, a0) = characteristic_coeffs(params);
    let disc = a1 * a1 - 4.0 * a2 * a0;
    debug_assert!(disc > 0.0);
    let x1 = (a1 + disc.max(0.0).sqrt()) / (2.0 * a2);
    let x2 = a0 / (a2 * x1);
    if (x1 - x2).abs() < 1e-9 {
        return Err(Error::DegenerateRoots { gap: (x1 - x2).abs() });
    }
    Ok(CharacteristicRoots { x1, x2 })
}

// ---------------------------------------------------------------------------
// Sojourn times of a joining customer
// ---------------------------------------------------------------------------

/// PGF of the sojourn time of a customer joining at `(n, busy)`, `n >= 1`.
pub fn sojourn_pgf_busy(n: u32, params: &QueueParams, z: f64) -> f64 {
    debug_assert!(n >= 1);
    let mu_b = params.mu_b;
    let gb = mu_b * z / (1.0 - (1.0 - mu_b) * z);
    mu_b / (1.0 - (1.0 - mu_b) * z) * gb.powi(n as i32)
}

/// Mean sojourn of a customer joining at `(n, busy)`: `(n + 1)/mu_b - 1`.
pub fn mean_sojourn_busy(n: u32, params: &QueueParams) -> f64 {
    debug_assert!(n >= 1);
    (n as f64 + 1.0) / params.mu_b - 1.0
}

/// PGF of the sojourn of a customer joining the empty system in vacation:
/// either its own service completes at the reduced rate before the vacation
/// ends, or the residual vacation is followed by one regular service.
pub(crate) fn empty_vacation_sojourn_pgf(params: &QueueParams, z: f64) -> f64 {
    let QueueParams { mu_b, mu_v, theta, .. } = *params;
    let tb = 1.0 - theta;
    let y = 1.0 - (1.0 - mu_v) * tb * z;
    let gb = mu_b * z / (1.0 - (1.0 - mu_b) * z);
    mu_v * tb * z / y + theta / y * gb
}

/// PGF of the sojourn time of a customer joining at `(n, vacation)`.
///
/// For `n >= 1` the simplified two-term closed form is used; near the
/// removable singularity of its shared denominator the evaluation falls back
/// to the explicit double sum, which is exact for any `z` in [0, 1].
pub fn sojourn_pgf_vacation(n: u32, params: &QueueParams, z: f64) -> f64 {
    if n == 0 {
        return empty_vacation_sojourn_pgf(params, z);
    }
    let QueueParams { mu_b, mu_v, theta, .. } = *params;
    let tb = 1.0 - theta;
    let y = 1.0 - (1.0 - mu_v) * tb * z;
    let d = mu_b * y - mu_v * tb * (1.0 - (1.0 - mu_b) * z);
    if d.abs() < 1e-8 * (mu_b + mu_v) {
        return sojourn_pgf_vacation_series(n, params, z);
    }
    let gv = mu_v * tb * z / y;
    let gb = mu_b * z / (1.0 - (1.0 - mu_b) * z);
    let term1 = mu_v / y * gv.powi(n as i32) * (1.0 - theta * mu_b / d);
    let term2 = theta * mu_b / d * gb.powi(n as i32) * (mu_v + (1.0 - mu_v) * gb);
    term1 + term2
}

/// Unsimplified double-sum form of the vacation-phase sojourn PGF, `n >= 1`:
/// conditions on whether a departure shares the arrival boundary and on how
/// many reduced-rate services finish before the vacation ends.
pub fn sojourn_pgf_vacation_series(n: u32, params: &QueueParams, z: f64) -> f64 {
    debug_assert!(n >= 1);
    let QueueParams { mu_b, mu_v, theta, .. } = *params;
    let tb = 1.0 - theta;
    let y = 1.0 - (1.0 - mu_v) * tb * z;
    let gv = mu_v * tb * z / y;
    let gb = mu_b * z / (1.0 - (1.0 - mu_b) * z);
    let residual = theta / y;
    let group = |m: i32| -> f64 {
        let mut acc = gv.powi(m);
        for j in 0..m {
            acc += residual * gv.powi(j) * gb.powi(m - j);
        }
        acc
    };
    mu_v * group(n as i32) + (1.0 - mu_v) * group(n as i32 + 1)
}

/// Mean sojourn of a customer joining at `(n, vacation)`.
pub fn mean_sojourn_vacation(n: u32, params: &QueueParams) -> f64 {
    let QueueParams { mu_b, mu_v, theta, .. } = *params;
    let c = theta + mu_v - theta * mu_v;
    if n == 0 {
        return (theta + mu_b - theta * mu_b) / (mu_b * c);
    }
    let s = mu_v * (1.0 - theta) / c;
    let a = (mu_b - mu_v) / (theta * mu_b);
    (n as f64 + 1.0) / mu_b - 1.0 + a * (1.0 - s.powi(n as i32 + 1))
}

/// Expected net benefit `R - C E[W(j)]` of joining at an observed state.
pub fn net_benefit(
    phase: ServerPhase,
    n: u32,
    params: &QueueParams,
    econ: &EconParams,
) -> f64 {
    let wait = match phase {
        ServerPhase::Busy => mean_sojourn_busy(n, params),
        ServerPhase::Vacation => mean_sojourn_vacation(n, params),
    };
    econ.reward - econ.cost * wait
}

// ---------------------------------------------------------------------------
// Equilibrium thresholds
// ---------------------------------------------------------------------------

/// Equilibrium pure threshold pair: in each phase, the largest observed count
/// at which joining still has nonnegative net benefit (-1 when even the
/// lowest state is unprofitable).
pub fn equilibrium_thresholds(params: &QueueParams, econ: &EconParams) -> ThresholdPair {
    let base = (params.mu_b * (econ.reward / econ.cost + 1.0) - 1.0).floor() as i64;
    let mut n1 = base.max(-1);
    while net_benefit(ServerPhase::Busy, (n1.max(0) + 1) as u32, params, econ) >= 0.0 {
        n1 += 1;
    }
    while n1 >= 1 && net_benefit(ServerPhase::Busy, n1 as u32, params, econ) < 0.0 {
        n1 -= 1;
    }
    if n1 == 0 && net_benefit(ServerPhase::Busy, 1, params, econ) < 0.0 {
        // an observed count of 0 in the busy phase is unreachable, but the
        // join rule stays total: count < 1 never occurs with a busy server
        n1 = -1;
    }

    let mut n0 = -1;
    let mut n = 0u32;
    let mut prev_wait = f64::NEG_INFINITY;
    while net_benefit(ServerPhase::Vacation, n, params, econ) >= 0.0 {
        let wait = mean_sojourn_vacation(n, params);
        debug_assert!(wait > prev_wait, "vacation sojourn must increase with n");
        prev_wait = wait;
        n0 = n as i64;
        n += 1;
    }
    let _ = prev_wait;
    ThresholdPair { n0, n1 }
}

/// Continuous-root variant of the vacation threshold: solves the smooth
/// `n >= 1` branch of the net benefit for its real root and floors it, with
/// the n = 0 and all-balk cases handled explicitly. Cross-checked against
/// the integer scan.
pub fn vacation_threshold_by_continuous_root(
    params: &QueueParams,
    econ: &EconParams,
) -> Result<i64> {
    if net_benefit(ServerPhase::Vacation, 0, params, econ) < 0.0 {
        return Ok(-1);
    }
    if net_benefit(ServerPhase::Vacation, 1, params, econ) < 0.0 {
        return Ok(0);
    }
    let QueueParams { mu_b, mu_v, theta, .. } = *params;
    let c = theta + mu_v - theta * mu_v;
    let s = mu_v * (1.0 - theta) / c;
    let a = (mu_b - mu_v) / (theta * mu_b);
    let f = |x: f64| {
        econ.reward
            - econ.cost * ((x + 1.0) / mu_b - 1.0 + a * (1.0 - s.powf(x + 1.0)))
    };
    let hi = mu_b * (econ.reward / econ.cost + 2.0 + a.abs()) + 2.0;
    let root = bisect_decreasing(f, 1.0, hi, 1e-9, 200)?;
    Ok(root.floor() as i64)
}

// ---------------------------------------------------------------------------
// Stationary distribution under a threshold policy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ClosedForm,
    LinearSolve,
}

/// Stationary distribution over the truncated state space induced by a
/// threshold policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableStationary {
    method: SolveMethod,
    thresholds: ThresholdPair,
    probs: BTreeMap<SystemState, f64>,
}

impl ObservableStationary {
    pub fn method(&self) -> SolveMethod {
        self.method
    }

    pub fn thresholds(&self) -> ThresholdPair {
        self.thresholds
    }

    pub fn prob(&self, state: SystemState) -> f64 {
        self.probs.get(&state).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SystemState, f64)> + '_ {
        self.probs.iter().map(|(s, p)| (*s, *p))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability that an arriving customer joins (sees an admitting state).
    pub fn join_probability(&self) -> f64 {
        self.iter().filter(|(s, _)| self.thresholds.admits(*s)).map(|(_, p)| p).sum()
    }

    pub fn mean_queue_length(&self) -> f64 {
        self.iter().map(|(s, p)| s.count as f64 * p).sum()
    }

    pub fn regime_probability_vacation(&self) -> f64 {
        self.iter().filter(|(s, _)| s.phase == ServerPhase::Vacation).map(|(_, p)| p).sum()
    }
}

/// Coefficients of the closed-form stationary distribution, all scaled by the
/// anchor probability `pi11`; `h` is the normalizing determinant of the
/// boundary system for the vacation-level geometric coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableCoefficients {
    pub a1t: f64,
    pub b1t: f64,
    pub c1t: f64,
    pub d1t: f64,
    pub a2t: f64,
    pub b2t: f64,
    pub b3t: f64,
    pub pi11: f64,
    pub h: f64,
}

fn coefficient_pieces(params: &QueueParams, n0: i64) -> Result<(CharacteristicRoots, f64, f64)> {
    let roots = characteristic_roots(params)?;
    let QueueParams { p, mu_v, theta, .. } = *params;
    let (pb, mvb, tb) = (1.0 - p, 1.0 - mu_v, 1.0 - theta);
    let e = theta + tb * p * mvb + tb * pb * mu_v
        - theta * tb * mvb
        - tb * tb * mvb * mvb * p
        - tb * tb * mvb * mu_v;
    let f = p * tb * mvb * (1.0 - tb * mvb);
    let _ = n0;
    Ok((roots, e, f))
}

/// Closed-form coefficients for thresholds with `n0 >= 1`, `n1 >= n0 + 2`,
/// normalized so that the full distribution sums to one.
pub fn observable_coefficients(
    params: &QueueParams,
    thresholds: &ThresholdPair,
) -> Result<ObservableCoefficients> {
    let dist = closed_form_distribution(params, thresholds)?;
    let mut coeffs = unnormalized_coefficients(params, thresholds)?;
    let scale = dist.prob(SystemState::busy(1)) / coeffs.pi11;
    coeffs.a1t *= scale;
    coeffs.b1t *= scale;
    coeffs.c1t *= scale;
    coeffs.d1t *= scale;
    coeffs.a2t *= scale;
    coeffs.b2t *= scale;
    coeffs.b3t *= scale;
    coeffs.pi11 *= scale;
    Ok(coeffs)
}

fn unnormalized_coefficients(
    params: &QueueParams,
    thresholds: &ThresholdPair,
) -> Result<ObservableCoefficients> {
    let (n0, n1) = (thresholds.n0, thresholds.n1);
    if n0 < 1 || n1 < n0 + 2 {
        return Err(Error::UnsupportedThresholdShape { n0, n1 });
    }
    let QueueParams { p, mu_b, mu_v, theta } = *params;
    let (pb, mbb, mvb, tb) = (1.0 - p, 1.0 - mu_b, 1.0 - mu_v, 1.0 - theta);
    let alpha = busy_traffic_ratio(p, mu_b);
    if (1.0 - alpha).abs() < 1e-9 {
        return Err(Error::NumericalInstability { what: "1 - alpha" });
    }
    let (roots, e, f) = coefficient_pieces(params, n0)?;
    let (x1, x2) = (roots.x1, roots.x2);

    let phi = |x: f64| theta * x + tb * p * mvb * x - tb * pb * mu_v * x * x;
    let psi = |x: f64| e * x.powi(n0 as i32) - f * x.powi(n0 as i32 - 1);
    let h_inv = phi(x2) * psi(x1) - phi(x1) * psi(x2);
    let h_scale = phi(x2).abs() * psi(x1).abs() + phi(x1).abs() * psi(x2).abs();
    if h_inv.abs() < 1e-13 * (1.0 + h_scale) {
        return Err(Error::NumericalInstability { what: "normalizing determinant H" });
    }
    let h = 1.0 / h_inv;

    let pi11 = 1.0;
    let a1t = -h * pb * tb * mu_b * pi11 * psi(x2);
    let b1t = h * pb * tb * mu_b * pi11 * psi(x1);

    let den_c = (x1 - 1.0) * (p * mbb - pb * mu_b * x1);
    let den_d = (1.0 - x2) * (pb * mu_b * x2 - p * mbb);
    if den_c.abs() < 1e-12 * (1.0 + pb * mu_b * x1) || den_d.abs() < 1e-12 * (1.0 + pb * mu_b) {
        // x1 or x2 collides with alpha: the particular solution resonates
        return Err(Error::NumericalInstability { what: "particular-solution denominator" });
    }
    let c1t = theta * a1t * ((x1 - 1.0) * (pb * mu_v * x1 - p * mvb) + x1) / den_c;
    let d1t = theta * b1t * ((x2 - 1.0) * (pb * mu_v * x2 - p * mvb) + x2) / den_d;

    let sum1 = a1t * x1 + b1t * x2;
    let sum2 = a1t * x1 * x1 + b1t * x2 * x2;
    let csum1 = c1t * x1 + d1t * x2;
    let csum2 = c1t * x1 * x1 + d1t * x2 * x2;
    let a2t = (pb * mu_b * tb * pi11 - pb * mu_b * (csum2 - alpha * csum1)
        - theta * pb * mu_v * sum2
        - theta * (1.0 - p * mvb) * sum1)
        / (pb * mu_b * (1.0 - alpha));
    let b2t = (pb * mu_b * (csum2 - csum1) + theta * pb * mu_v * sum2
        + theta * (1.0 - p * mvb) * sum1
        - (p * mbb - pb * mu_b * theta) * pi11)
        / (pb * mu_b * alpha * (1.0 - alpha));

    let sum_n0 = a1t * x1.powi(n0 as i32) + b1t * x2.powi(n0 as i32);
    let pi_n0p1_busy = alpha
        * (a2t
            + b2t * alpha.powi(n0 as i32)
            + c1t * x1.powi(n0 as i32)
            + d1t * x2.powi(n0 as i32))
        + p * theta * mvb / (pb * mu_b * (1.0 - tb * mvb)) * sum_n0;
    let b3t = alpha.powi(-(n0 as i32) - 1) * pi_n0p1_busy;

    Ok(ObservableCoefficients { a1t, b1t, c1t, d1t, a2t, b2t, b3t, pi11, h })
}

/// Stationary distribution from the closed form, for thresholds with
/// `n0 >= 1` and `n1 >= n0 + 2`. Other shapes, degenerate roots, a traffic
/// ratio at 1, or coefficient cancellation report errors so callers can fall
/// back to the direct linear solve.
pub fn closed_form_distribution(
    params: &QueueParams,
    thresholds: &ThresholdPair,
) -> Result<ObservableStationary> {
    let co = unnormalized_coefficients(params, thresholds)?;
    let (n0, n1) = (thresholds.n0, thresholds.n1);
    let QueueParams { p, mu_b, mu_v, theta } = *params;
    let (pb, mvb, tb) = (1.0 - p, 1.0 - mu_v, 1.0 - theta);
    let alpha = busy_traffic_ratio(p, mu_b);
    let roots = characteristic_roots(params)?;
    let (x1, x2) = (roots.x1, roots.x2);

    let vac_mass = |n: i64| co.a1t * x1.powi(n as i32) + co.b1t * x2.powi(n as i32);
    let mut probs: BTreeMap<SystemState, f64> = BTreeMap::new();
    probs.insert(
        SystemState::vacation(0),
        pb * mu_v / p * vac_mass(1) + pb * mu_b / p * co.pi11,
    );
    for n in 1..=n0 {
        probs.insert(SystemState::vacation(n as u32), vac_mass(n));
    }
    probs.insert(
        SystemState::vacation((n0 + 1) as u32),
        p * tb * mvb / (1.0 - tb * mvb) * vac_mass(n0),
    );
    for n in 1..=n0 {
        let v = co.a2t
            + co.b2t * alpha.powi(n as i32)
            + co.c1t * x1.powi(n as i32)
            + co.d1t * x2.powi(n as i32);
        probs.insert(SystemState::busy(n as u32), v);
    }
    let pi_n0p1_busy = co.b3t * alpha.powi(n0 as i32 + 1);
    probs.insert(SystemState::busy((n0 + 1) as u32), pi_n0p1_busy);
    for n in (n0 + 2)..=n1 {
        probs.insert(SystemState::busy(n as u32), co.b3t * alpha.powi(n as i32));
    }
    probs.insert(
        SystemState::busy((n1 + 1) as u32),
        pb * alpha.powi((n1 - n0) as i32) * pi_n0p1_busy,
    );

    let total: f64 = probs.values().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::NumericalInstability { what: "closed-form normalization" });
    }
    let mut worst_negative = 0.0f64;
    for v in probs.values_mut() {
        *v /= total;
        worst_negative = worst_negative.min(*v);
    }
    if worst_negative < -1e-10 {
        return Err(Error::NumericalInstability { what: "negative closed-form mass" });
    }
    for v in probs.values_mut() {
        *v = v.max(0.0);
    }
    Ok(ObservableStationary {
        method: SolveMethod::ClosedForm,
        thresholds: *thresholds,
        probs,
    })
}

/// The finite chain induced by a threshold policy: ordered state list plus
/// its row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableChain {
    thresholds: ThresholdPair,
    states: Vec<SystemState>,
    index: BTreeMap<SystemState, usize>,
    matrix: DMatrix<f64>,
}

impl ObservableChain {
    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn thresholds(&self) -> ThresholdPair {
        self.thresholds
    }

    pub fn index_of(&self, state: SystemState) -> Option<usize> {
        self.index.get(&state).copied()
    }

    pub fn prob(&self, from: SystemState, to: SystemState) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => 0.0,
        }
    }

    /// Nonzero transition row out of a state.
    pub fn row(&self, from: SystemState) -> Vec<(SystemState, f64)> {
        match self.index_of(from) {
            None => Vec::new(),
            Some(i) => self
                .states
                .iter()
                .enumerate()
                .filter(|(j, _)| self.matrix[(i, *j)] != 0.0)
                .map(|(j, s)| (*s, self.matrix[(i, j)]))
                .collect(),
        }
    }
}

/// One-slot transition distribution out of `state` under a threshold policy:
/// arrival (joining iff admitted), then a service completion of the
/// pre-arrival head, then the vacation-termination draw, with a fresh
/// vacation whenever the system empties.
fn transition_row(
    params: &QueueParams,
    thresholds: &ThresholdPair,
    state: SystemState,
) -> Vec<(SystemState, f64)> {
    let QueueParams { p, mu_b, mu_v, theta } = *params;
    let p_eff = if thresholds.admits(state) { p } else { 0.0 };
    let mut out: BTreeMap<SystemState, f64> = BTreeMap::new();
    let mut add = |s: SystemState, w: f64| {
        if w > 0.0 {
            *out.entry(s).or_insert(0.0) += w;
        }
    };
    let n = state.count;
    if n == 0 {
        add(SystemState::vacation(0), 1.0 - p_eff);
        add(SystemState::vacation(1), p_eff * (1.0 - theta));
        add(SystemState::busy(1), p_eff * theta);
    } else {
        let mu = match state.phase {
            ServerPhase::Vacation => mu_v,
            ServerPhase::Busy => mu_b,
        };
        for (arr, pa) in [(1u32, p_eff), (0, 1.0 - p_eff)] {
            if pa == 0.0 {
                continue;
            }
            for (dep, pd) in [(1u32, mu), (0, 1.0 - mu)] {
                let m = n + arr - dep;
                let w = pa * pd;
                if m == 0 {
                    add(SystemState::vacation(0), w);
                } else {
                    match state.phase {
                        ServerPhase::Vacation => {
                            add(SystemState::vacation(m), w * (1.0 - theta));
                            add(SystemState::busy(m), w * theta);
                        }
                        ServerPhase::Busy => add(SystemState::busy(m), w),
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Builds the full transition matrix over the state space a threshold policy
/// can reach. Vacation levels run to `n0 + 1`; busy levels to
/// `max(n0, n1) + 1` (states above `n1` arise from vacation terminations even
/// when busy joining is capped lower). `n0 = -1` leaves only the empty state.
pub fn transition_matrix(params: &QueueParams, thresholds: &ThresholdPair) -> ObservableChain {
    let (n0, n1) = (thresholds.n0, thresholds.n1);
    let mut states = vec![SystemState::vacation(0)];
    if n0 >= 0 {
        for n in 1..=(n0 + 1) {
            states.push(SystemState::vacation(n as u32));
        }
        let bmax = n0.max(n1) + 1;
        for n in 1..=bmax {
            states.push(SystemState::busy(n as u32));
        }
    }
    let index: BTreeMap<SystemState, usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let m = states.len();
    let mut matrix = DMatrix::<f64>::zeros(m, m);
    for (i, s) in states.iter().enumerate() {
        for (t, w) in transition_row(params, thresholds, *s) {
            matrix[(i, index[&t])] += w;
        }
    }
    ObservableChain { thresholds: *thresholds, states, index, matrix }
}

/// Direct stationary solve of the threshold chain.
pub fn linear_solve_distribution(chain: &ObservableChain) -> Result<ObservableStationary> {
    let pi = chain::stationary_distribution(chain.matrix())?;
    let probs = chain.states.iter().copied().zip(pi).collect();
    Ok(ObservableStationary {
        method: SolveMethod::LinearSolve,
        thresholds: chain.thresholds,
        probs,
    })
}

/// Stationary distribution under a threshold policy: the closed form when it
/// applies, otherwise the direct linear solve. The linear solve defines the
/// semantics; the closed form is an equivalent fast path.
pub fn stationary_distribution(
    params: &QueueParams,
    thresholds: &ThresholdPair,
) -> Result<ObservableStationary> {
    match closed_form_distribution(params, thresholds) {
        Ok(dist) => Ok(dist),
        Err(
            Error::UnsupportedThresholdShape { .. }
            | Error::DegenerateRoots { .. }
            | Error::NumericalInstability { .. },
        ) => linear_solve_distribution(&transition_matrix(params, thresholds)),
        Err(e) => Err(e),
    }
}

/// Long-run social benefit per slot of a threshold policy:
/// reward inflow `p R P(join)` minus holding cost `C E[L]`.
pub fn social_benefit(
    params: &QueueParams,
    econ: &EconParams,
    thresholds: &ThresholdPair,
) -> Result<f64> {
    if thresholds.n0 < 0 {
        // nobody ever joins: the chain stays empty
        return Ok(0.0);
    }
    let dist = stationary_distribution(params, thresholds)?;
    Ok(social_benefit_of(params, econ, &dist))
}

/// Social benefit evaluated on an already-computed stationary distribution.
pub fn social_benefit_of(
    params: &QueueParams,
    econ: &EconParams,
    dist: &ObservableStationary,
) -> f64 {
    params.p * econ.reward * dist.join_probability() - econ.cost * dist.mean_queue_length()
}

/// Socially optimal threshold pair: exhaustive argmax of the social benefit
/// over the integer box `[-1, cap]^2`, ties resolved toward the
/// lexicographically smallest pair. The default cap is five above the larger
/// equilibrium coordinate, and the cap never shrinks below the equilibrium.
pub fn socially_optimal_thresholds(
    params: &QueueParams,
    econ: &EconParams,
    cap: Option<i64>,
) -> Result<ThresholdPair> {
    let eq = equilibrium_thresholds(params, econ);
    let cap = cap.unwrap_or(eq.n0.max(eq.n1) + 5).max(eq.n0).max(eq.n1).max(-1);
    let mut best = ThresholdPair { n0: -1, n1: -1 };
    let mut best_value = 0.0f64;
    for n0 in -1..=cap {
        for n1 in -1..=cap {
            let candidate = ThresholdPair { n0, n1 };
            let value = social_benefit(params, econ, &candidate)?;
            if value > best_value + 1e-12 {
                best_value = value;
                best = candidate;
            }
        }
    }
    Ok(best)
}

/// Max-abs residual of the stationary balance equations of the threshold
/// chain, written out state by state in their closed-form ranges
/// (valid for `n0 >= 1`, `n1 >= n0 + 2`; the two boundary families that
/// additionally need `n0 >= 2` are skipped when `n0 == 1`).
pub fn balance_residual_max(
    params: &QueueParams,
    thresholds: &ThresholdPair,
    dist: &ObservableStationary,
) -> f64 {
    let (n0, n1) = (thresholds.n0, thresholds.n1);
    assert!(n0 >= 1 && n1 >= n0 + 2, "balance equations cover the closed-form shape");
    let QueueParams { p, mu_b, mu_v, theta } = *params;
    let (pb, mbb, mvb, tb) = (1.0 - p, 1.0 - mu_b, 1.0 - mu_v, 1.0 - theta);
    let v = |n: i64| dist.prob(SystemState::vacation(n as u32));
    let b = |n: i64| dist.prob(SystemState::busy(n as u32));
    let mut worst = 0.0f64;
    let mut check = |lhs: f64, rhs: f64| worst = worst.max((lhs - rhs).abs());

    // empty state
    check(v(0), pb * v(0) + pb * mu_v * v(1) + pb * mu_b * b(1));
    if n0 >= 2 {
        // vacation level 1 (needs a joinable level-2 vacation state)
        check(
            v(1),
            p * tb * v(0) + tb * (1.0 - p * mvb - pb * mu_v) * v(1) + tb * pb * mu_v * v(2),
        );
    }
    // interior vacation levels
    for n in 2..=(n0 - 1) {
        check(
            v(n),
            tb * p * mvb * v(n - 1)
                + tb * (1.0 - p * mvb - pb * mu_v) * v(n)
                + tb * pb * mu_v * v(n + 1),
        );
    }
    if n0 >= 2 {
        // top joinable vacation level (its up-neighbour no longer admits)
        check(
            v(n0),
            tb * p * mvb * v(n0 - 1)
                + tb * (1.0 - p * mvb - pb * mu_v) * v(n0)
                + tb * mu_v * v(n0 + 1),
        );
    }
    // blocked vacation level
    check(v(n0 + 1), p * tb * mvb * v(n0) + tb * mvb * v(n0 + 1));
    if n0 >= 2 {
        // busy level 1
        check(
            b(1),
            p * theta * v(0)
                + theta * (1.0 - p * mvb - pb * mu_v) * v(1)
                + (1.0 - p * mbb - pb * mu_b) * b(1)
                + theta * pb * mu_v * v(2)
                + pb * mu_b * b(2),
        );
    }
    for n in 2..=(n0 - 1) {
        check(
            b(n),
            theta * p * mvb * v(n - 1)
                + p * mbb * b(n - 1)
                + theta * (1.0 - p * mvb - pb * mu_v) * v(n)
                + (1.0 - p * mbb - pb * mu_b) * b(n)
                + theta * pb * mu_v * v(n + 1)
                + pb * mu_b * b(n + 1),
        );
    }
    if n0 >= 2 {
        check(
            b(n0),
            theta * p * mvb * v(n0 - 1)
                + p * mbb * b(n0 - 1)
                + theta * (1.0 - p * mvb - pb * mu_v) * v(n0)
                + (1.0 - p * mbb - pb * mu_b) * b(n0)
                + theta * mu_v * v(n0 + 1)
                + pb * mu_b * b(n0 + 1),
        );
    }
    // first pure-busy level above the vacation cut
    check(
        b(n0 + 1),
        p * mbb * b(n0) + pb * mu_b * b(n0 + 2) + (1.0 - p * mbb - pb * mu_b) * b(n0 + 1)
            + theta * mvb * v(n0 + 1)
            + p * theta * mvb * v(n0),
    );
    for n in (n0 + 2)..=(n1 - 1) {
        check(
            b(n),
            p * mbb * b(n - 1) + (1.0 - p * mbb - pb * mu_b) * b(n) + pb * mu_b * b(n + 1),
        );
    }
    check(
        b(n1),
        p * mbb * b(n1 - 1) + (1.0 - p * mbb - pb * mu_b) * b(n1) + mu_b * b(n1 + 1),
    );
    check(b(n1 + 1), p * mbb * b(n1) + mbb * b(n1 + 1));
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QueueParams {
        QueueParams::new(0.5, 0.8, 0.4, 0.2).unwrap()
    }

    fn econ() -> EconParams {
        EconParams::new(10.0, 1.0).unwrap()
    }

    #[test]
    fn roots_satisfy_equation_and_vieta() {
        for (p, mu_v, theta) in [(0.5, 0.4, 0.2), (0.1, 0.9, 0.05), (0.85, 0.15, 0.6)] {
            let q = QueueParams::new(p, 0.7, mu_v, theta).unwrap();
            let (a2, a1, a0) = characteristic_coeffs(&q);
            let r = characteristic_roots(&q).unwrap();
            for x in [r.x1, r.x2] {
                assert!((a2 * x * x - a1 * x + a0).abs() < 1e-12);
            }
            let product = p * (1.0 - mu_v) / ((1.0 - p) * mu_v);
            assert!((r.x1 * r.x2 - product).abs() < 1e-12);
            assert!((r.x1 + r.x2 - a1 / a2).abs() < 1e-12);
            assert!(r.x2 < 1.0 && 1.0 < r.x1);
        }
    }

    #[test]
    fn near_critical_vacation_root_stays_below_one() {
        let q = QueueParams::new(0.5, 0.7, 0.5, 0.01).unwrap();
        let r = characteristic_roots(&q).unwrap();
        assert!(r.x2 < 1.0 && r.x2 > 0.9);
    }

    #[test]
    fn busy_sojourn_examples() {
        let q = QueueParams::new(0.5, 1.0 - 1e-12, 0.4, 0.2).unwrap();
        assert!((mean_sojourn_busy(1, &q) - 1.0).abs() < 1e-9);
        let q = QueueParams::new(0.5, 0.5, 0.4, 0.2).unwrap();
        assert!((mean_sojourn_busy(1, &q) - 3.0).abs() < 1e-12);
        assert!((sojourn_pgf_busy(1, &q, 1.0) - 1.0).abs() < 1e-12);
        let q = QueueParams::new(0.5, 0.8, 0.4, 0.2).unwrap();
        assert!((mean_sojourn_busy(3, &q) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn vacation_sojourn_near_deterministic_service() {
        // with both rates at 1 the sojourn from an empty system is one slot
        let q = QueueParams::new(0.3, 1.0 - 1e-12, 1.0 - 1e-12, 0.4).unwrap();
        assert!((mean_sojourn_vacation(0, &q) - 1.0).abs() < 1e-9);
        assert!((sojourn_pgf_vacation(0, &q, 0.5) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn vacation_sojourn_equal_rates_matches_busy() {
        // equal service rates make the phase irrelevant for n >= 1
        let q = QueueParams::new(0.5, 0.5, 0.5, 0.3).unwrap();
        for n in 1..6 {
            assert!((mean_sojourn_vacation(n, &q) - mean_sojourn_busy(n, &q)).abs() < 1e-12);
        }
        // and a joiner of the empty system waits one full reduced-rate service
        assert!((mean_sojourn_vacation(0, &q) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vacation_pgf_normalizes_and_matches_series() {
        let q = params();
        for n in 0..6 {
            assert!((sojourn_pgf_vacation(n, &q, 1.0) - 1.0).abs() < 1e-10);
        }
        for n in 1..6 {
            for z in [0.1, 0.5, 0.7, 0.95, 1.0] {
                let a = sojourn_pgf_vacation(n, &q, z);
                let b = sojourn_pgf_vacation_series(n, &q, z);
                assert!((a - b).abs() < 1e-12, "n={n} z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn vacation_pgf_survives_denominator_zero_crossing() {
        // mu_v * (1 - theta) > mu_b puts the removable singularity inside (0, 1)
        let q = QueueParams::new(0.5, 0.3, 0.9, 0.05).unwrap();
        let mut prev = sojourn_pgf_vacation(2, &q, 0.0);
        for i in 1..=100 {
            let z = i as f64 / 100.0;
            let v = sojourn_pgf_vacation(2, &q, z);
            assert!(v.is_finite() && v >= prev - 1e-9, "pgf must be nondecreasing in z");
            prev = v;
        }
        assert!((sojourn_pgf_vacation(2, &q, 1.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn net_benefit_examples() {
        let q = QueueParams::new(0.5, 1.0 - 1e-12, 1.0 - 1e-12, 0.2).unwrap();
        let e = econ();
        assert!((net_benefit(ServerPhase::Busy, 1, &q, &e) - 9.0).abs() < 1e-9);
        assert!((net_benefit(ServerPhase::Vacation, 0, &q, &e) - 9.0).abs() < 1e-9);
        // indifference point by construction
        let q = params();
        let indifferent = EconParams::new(mean_sojourn_busy(4, &q), 1.0).unwrap();
        assert!(net_benefit(ServerPhase::Busy, 4, &q, &indifferent).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_threshold_busy_closed_form() {
        let eq = equilibrium_thresholds(&params(), &econ());
        assert_eq!(eq.n1, 7);
        assert_eq!(eq.n0, 5);
    }

    #[test]
    fn equilibrium_all_balk_when_reward_too_small() {
        // equal rates: joining even an empty system costs 1/mu = 2 > R/C
        let q = QueueParams::new(0.5, 0.5, 0.5, 0.3).unwrap();
        let e = EconParams::new(1.9, 1.0).unwrap();
        let eq = equilibrium_thresholds(&q, &e);
        assert_eq!(eq.n0, -1);
    }

    #[test]
    fn equilibrium_threshold_is_tight() {
        let (q, e) = (params(), econ());
        let eq = equilibrium_thresholds(&q, &e);
        assert!(net_benefit(ServerPhase::Vacation, eq.n0 as u32, &q, &e) >= 0.0);
        assert!(net_benefit(ServerPhase::Vacation, (eq.n0 + 1) as u32, &q, &e) < 0.0);
        assert!(net_benefit(ServerPhase::Busy, eq.n1 as u32, &q, &e) >= 0.0);
        assert!(net_benefit(ServerPhase::Busy, (eq.n1 + 1) as u32, &q, &e) < 0.0);
    }

    #[test]
    fn continuous_root_agrees_with_scan() {
        for i in 1..10 {
            for j in 1..10 {
                let q = QueueParams::new(0.5, i as f64 / 10.0, j as f64 / 10.0, 0.25).unwrap();
                for reward in [1.5, 4.0, 12.0] {
                    let e = EconParams::new(reward, 1.0).unwrap();
                    let scan = equilibrium_thresholds(&q, &e).n0;
                    let root = vacation_threshold_by_continuous_root(&q, &e).unwrap();
                    assert_eq!(scan, root, "mu_b={} mu_v={} R={}", q.mu_b, q.mu_v, reward);
                }
            }
        }
    }

    #[test]
    fn transition_rows_match_block_entries() {
        let q = params();
        let thr = ThresholdPair::new(2, 5).unwrap();
        let chain = transition_matrix(&q, &thr);
        let QueueParams { p, mu_b, theta, .. } = q;
        // empty state: stay, join into vacation, join into fresh busy period
        assert!((chain.prob(SystemState::vacation(0), SystemState::vacation(0)) - (1.0 - p)).abs() < 1e-15);
        assert!(
            (chain.prob(SystemState::vacation(0), SystemState::vacation(1)) - p * (1.0 - theta)).abs() < 1e-15
        );
        assert!((chain.prob(SystemState::vacation(0), SystemState::busy(1)) - p * theta).abs() < 1e-15);
        // top busy state: arrivals balk, only the service draw acts
        assert!((chain.prob(SystemState::busy(6), SystemState::busy(5)) - mu_b).abs() < 1e-15);
        assert!((chain.prob(SystemState::busy(6), SystemState::busy(6)) - (1.0 - mu_b)).abs() < 1e-15);
        for i in 0..chain.states().len() {
            let sum: f64 = chain.matrix().row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_solve_has_tiny_residual() {
        let q = params();
        let thr = ThresholdPair::new(2, 5).unwrap();
        let chain = transition_matrix(&q, &thr);
        let dist = linear_solve_distribution(&chain).unwrap();
        let pi: Vec<f64> = chain.states().iter().map(|s| dist.prob(*s)).collect();
        assert!(crate::chain::residual_inf(chain.matrix(), &pi) < 1e-12);
    }

    #[test]
    fn closed_form_matches_linear_solve_at_fig_params() {
        let q = QueueParams::new(0.5, 0.8, 0.4, 0.05).unwrap();
        let thr = equilibrium_thresholds(&q, &econ());
        assert!(thr.n0 >= 1 && thr.n1 >= thr.n0 + 2);
        let cf = closed_form_distribution(&q, &thr).unwrap();
        assert_eq!(cf.method(), SolveMethod::ClosedForm);
        let ls = linear_solve_distribution(&transition_matrix(&q, &thr)).unwrap();
        for (s, v) in cf.iter() {
            assert!((v - ls.prob(s)).abs() < 1e-9, "state {s}");
        }
        let total: f64 = cf.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(balance_residual_max(&q, &thr, &cf) < 1e-10);
    }

    #[test]
    fn closed_form_rejects_small_shapes() {
        let q = params();
        let err = closed_form_distribution(&q, &ThresholdPair::new(0, 5).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedThresholdShape { .. }));
        let err = closed_form_distribution(&q, &ThresholdPair::new(2, 3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedThresholdShape { .. }));
        // the fallback still solves them
        let dist = stationary_distribution(&q, &ThresholdPair::new(0, 5).unwrap()).unwrap();
        assert_eq!(dist.method(), SolveMethod::LinearSolve);
    }

    #[test]
    fn social_benefit_zero_when_nobody_joins() {
        let v = social_benefit(&params(), &econ(), &ThresholdPair::new(-1, -1).unwrap()).unwrap();
        assert_eq!(v, 0.0);
        let v = social_benefit(&params(), &econ(), &ThresholdPair::new(-1, 4).unwrap()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn social_benefit_matches_balking_form() {
        // p R (1 - blocked mass) - C E[L] for the standard shape
        let (q, e) = (params(), econ());
        let thr = ThresholdPair::new(3, 6).unwrap();
        let dist = stationary_distribution(&q, &thr).unwrap();
        let blocked = dist.prob(SystemState::vacation(4)) + dist.prob(SystemState::busy(7));
        let direct = q.p * e.reward * (1.0 - blocked) - e.cost * dist.mean_queue_length();
        assert!((social_benefit(&q, &e, &thr).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn larger_cap_never_hurts_the_optimum() {
        let (q, e) = (params(), econ());
        let t1 = socially_optimal_thresholds(&q, &e, Some(8)).unwrap();
        let t2 = socially_optimal_thresholds(&q, &e, Some(12)).unwrap();
        let v1 = social_benefit(&q, &e, &t1).unwrap();
        let v2 = social_benefit(&q, &e, &t2).unwrap();
        assert!(v2 >= v1 - 1e-12);
    }

    #[test]
    fn tiny_reward_drives_optimum_to_the_floor() {
        let q = params();
        // barely above the empty-system vacation wait
        let e = EconParams::new(mean_sojourn_vacation(0, &q) + 0.05, 1.0).unwrap();
        let best = socially_optimal_thresholds(&q, &e, None).unwrap();
        assert!(best.n0 <= 0 && best.n1 <= 1, "got {best:?}");
    }
}
