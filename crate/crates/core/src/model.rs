//! Shared parameter types and state-space vocabulary.
//!
//! The slot model: arrivals occur at the end of a slot, service completions
//! at the following division point, and the four Bernoulli rates below drive
//! every event. Complements are always computed as `1.0 - x` at the use site.

use crate::error::{Error, Result};

/// The four per-slot Bernoulli rates of the queue.
///
/// All rates must lie strictly inside (0, 1); boundary values are rejected
/// rather than limit-handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Arrival probability per slot.
    pub p: f64,
    /// Service completion probability per slot during a regular busy period.
    pub mu_b: f64,
    /// Service completion probability per slot during a working vacation.
    pub mu_v: f64,
    /// Vacation termination probability per slot.
    pub theta: f64,
}

impl QueueParams {
    pub fn new(p: f64, mu_b: f64, mu_v: f64, theta: f64) -> Result<Self> {
        let params = Self { p, mu_b, mu_v, theta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("p", self.p)?;
        check_open_unit("mu_b", self.mu_b)?;
        check_open_unit("mu_v", self.mu_v)?;
        check_open_unit("theta", self.theta)?;
        Ok(())
    }
}

/// Linear reward-cost structure: a reward per completed service and a
/// waiting cost per slot spent in the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconParams {
    pub reward: f64,
    pub cost: f64,
}

impl EconParams {
    pub fn new(reward: f64, cost: f64) -> Result<Self> {
        let econ = Self { reward, cost };
        econ.validate()?;
        Ok(econ)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("reward", self.reward)?;
        check_positive("cost", self.cost)?;
        Ok(())
    }
}

/// Validates a full parameter bundle, returning it unchanged when all
/// invariants hold. Idempotent by construction.
pub fn validate(params: QueueParams, econ: EconParams) -> Result<(QueueParams, EconParams)> {
    params.validate()?;
    econ.validate()?;
    Ok((params, econ))
}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, domain: "the open interval (0, 1)" })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, domain: "a positive finite value" })
    }
}

/// Server phase: working vacation (reduced rate) or regular busy period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ServerPhase {
    Vacation,
    Busy,
}

/// A point of the chain's state space: queue length plus server phase.
///
/// An empty system is always in a vacation period, so `count == 0` forces
/// `ServerPhase::Vacation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemState {
    pub count: u32,
    pub phase: ServerPhase,
}

impl SystemState {
    pub fn new(count: u32, phase: ServerPhase) -> Result<Self> {
        if count == 0 && phase == ServerPhase::Busy {
            return Err(Error::InvalidParameter {
                name: "state",
                value: 0.0,
                domain: "a busy state with count >= 1 (count 0 implies vacation)",
            });
        }
        Ok(Self { count, phase })
    }

    pub fn vacation(count: u32) -> Self {
        Self { count, phase: ServerPhase::Vacation }
    }

    pub fn busy(count: u32) -> Self {
        debug_assert!(count >= 1);
        Self { count, phase: ServerPhase::Busy }
    }
}

impl std::fmt::Display for SystemState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let j = match self.phase {
            ServerPhase::Vacation => 0,
            ServerPhase::Busy => 1,
        };
        write!(f, "({},{})", self.count, j)
    }
}

/// Traffic ratio `p_eff * (1 - mu) / ((1 - p_eff) * mu)` of a busy-type
/// geometric level process. Strictly below 1 means stable drift.
pub fn busy_traffic_ratio(p_eff: f64, mu: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&p_eff));
    debug_assert!(mu > 0.0 && mu < 1.0);
    p_eff * (1.0 - mu) / ((1.0 - p_eff) * mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_interior_parameters() {
        let p = QueueParams::new(0.5, 0.8, 0.4, 0.2).unwrap();
        let e = EconParams::new(10.0, 1.0).unwrap();
        assert_eq!(validate(p, e).unwrap(), (p, e));
    }

    #[test]
    fn rejects_boundary_and_outside_values() {
        let err = QueueParams::new(0.0, 0.8, 0.4, 0.2).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "p", .. }));
        let err = QueueParams::new(0.5, 1.2, 0.4, 0.2).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "mu_b", .. }));
        let err = QueueParams::new(0.5, 0.8, 0.4, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "theta", .. }));
        assert!(QueueParams::new(0.5, 0.8, f64::NAN, 0.2).is_err());
        assert!(EconParams::new(0.0, 1.0).is_err());
        assert!(EconParams::new(10.0, -1.0).is_err());
    }

    #[test]
    fn validate_is_idempotent() {
        let p = QueueParams::new(0.5, 0.8, 0.4, 0.2).unwrap();
        let e = EconParams::new(10.0, 1.0).unwrap();
        let once = validate(p, e).unwrap();
        let twice = validate(once.0, once.1).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn traffic_ratio_examples() {
        assert!((busy_traffic_ratio(0.3, 0.6) - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(busy_traffic_ratio(0.0, 0.5), 0.0);
        assert!((busy_traffic_ratio(0.5, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn traffic_ratio_monotone_on_grid() {
        for i in 1..19 {
            for j in 1..19 {
                let p = i as f64 / 20.0;
                let mu = j as f64 / 20.0;
                assert!(busy_traffic_ratio(p + 0.04, mu) > busy_traffic_ratio(p, mu));
                assert!(busy_traffic_ratio(p, mu + 0.04) < busy_traffic_ratio(p, mu));
            }
        }
    }

    #[test]
    fn empty_busy_state_is_rejected() {
        assert!(SystemState::new(0, ServerPhase::Busy).is_err());
        assert!(SystemState::new(0, ServerPhase::Vacation).is_ok());
        assert_eq!(SystemState::vacation(2).to_string(), "(2,0)");
        assert_eq!(SystemState::busy(3).to_string(), "(3,1)");
    }
}
