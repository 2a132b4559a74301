//! Rotary-wing propulsion power, per-slot speed limits and the energy
//! reserve machinery.

mod backup;
mod dp;

pub use backup::{backup_plan, BackupPlan};
pub use dp::{dp_oracle, DpGrid, DpPlan};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    /// Blade profile power in hover, W.
    pub p0: f64,
    /// Induced power in hover, W.
    pub p_i: f64,
    /// Rotor tip speed, m/s.
    pub u_tip: f64,
    /// Mean induced velocity in hover, m/s.
    pub v_h: f64,
    /// ½·d₀·ρ·s·A, so parasite power is ½χ|v|³.
    pub chi: f64,
}

/// Propulsion power at horizontal speed `v`, in W.
pub fn propulsion_power(v: f64, pp: &PropulsionParams) -> f64 {
    let v2 = v * v;
    pp.p0 * (1.0 + 3.0 * v2 / (pp.u_tip * pp.u_tip)) + pp.p_i * induced_factor(v, pp.v_h) + 0.5 * pp.chi * v.abs() * v2
}

/// √(√(1+b²) − b) with b = v²/(2v_h²), written without cancellation.
pub fn induced_factor(v: f64, v_h: f64) -> f64 {
    let b = v * v / (2.0 * v_h * v_h);
    1.0 / ((1.0 + b * b).sqrt() + b).sqrt()
}

fn power_slope(v: f64, pp: &PropulsionParams) -> f64 {
    let b = v * v / (2.0 * pp.v_h * pp.v_h);
    let root = (1.0 + b * b).sqrt();
    let db = v / (pp.v_h * pp.v_h);
    let induced = -0.5 * (root + b).powf(-1.5) * (b / root + 1.0) * db;
    6.0 * pp.p0 * v / (pp.u_tip * pp.u_tip) + pp.p_i * induced + 1.5 * pp.chi * v * v.abs()
}

/// Speed minimizing power (maximum endurance).
pub fn max_endurance_speed(pp: &PropulsionParams) -> f64 {
    let (mut lo, mut hi) = (1e-9, 1.0);
    while power_slope(hi, pp) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power_slope(mid, pp) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Closed speed interval `[lo, hi]` with 0 ≤ lo ≤ hi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Speeds in [0, v_max] whose slot energy P(v)·Δt stays within `e_slot`.
///
/// Power is unimodal in speed, so the sub-level set is one interval found by
/// bisection on each monotone branch around the max-endurance speed; the
/// result is empty when even that speed is unaffordable.
pub fn feasible_speed_intervals(e_slot: f64, dt: f64, v_max: f64, pp: &PropulsionParams) -> Vec<SpeedInterval> {
    let cap = e_slot / dt;
    let p = |v: f64| propulsion_power(v, pp);
    let v_me = max_endurance_speed(pp).min(v_max);
    if p(v_me) > cap {
        return Vec::new();
    }
    let crossing = |mut below: f64, mut above: f64| {
        // p(below) ≤ cap < p(above)
        for _ in 0..200 {
            let mid = 0.5 * (below + above);
            if p(mid) <= cap {
                below = mid;
            } else {
                above = mid;
            }
            if (above - below).abs() <= 1e-13 * (1.0 + above.abs()) {
                break;
            }
        }
        below
    };
    let lo = if p(0.0) <= cap { 0.0 } else { crossing(v_me, 0.0) };
    let hi = if p(v_max) <= cap { v_max } else { crossing(v_me, v_max) };
    vec![SpeedInterval { lo, hi }]
}

/// Running energy account for one mission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    pub consumed: f64,
    pub budget: f64,
}

impl EnergyLedger {
    pub fn new(budget: f64) -> Self {
        Self { consumed: 0.0, budget }
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.consumed
    }

    pub fn record(&mut self, joules: f64) {
        self.consumed += joules;
    }
}

/// Absolute slack tolerated when comparing against the budget, J.
pub const BUDGET_SLACK: f64 = 1e-9;

/// True if flying this slot at `v` and then the backup plan costing `e_b`
/// still fits the budget.
pub fn feasibility_gate(ledger: &EnergyLedger, v: f64, dt: f64, e_b: f64, pp: &PropulsionParams) -> bool {
    ledger.consumed + propulsion_power(v, pp) * dt + e_b <= ledger.budget + BUDGET_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::grid_minimize;
    use crate::polyopt::Interval;
    use crate::scenario::SystemParams;
    use proptest::prelude::*;

    fn pp() -> PropulsionParams {
        SystemParams::default().propulsion()
    }

    #[test]
    fn reference_powers() {
        let pp = pp();
        let hover = propulsion_power(0.0, &pp);
        assert!((hover - (pp.p0 + pp.p_i)).abs() < 1e-12);
        assert!((hover - 168.4842).abs() < 1e-3, "{hover}");
        let fast = propulsion_power(30.0, &pp);
        assert!((fast - 356.48).abs() < 0.05, "{fast}");
    }

    #[test]
    fn max_endurance_matches_grid() {
        let pp = pp();
        let v = max_endurance_speed(&pp);
        let (vg, pg) = grid_minimize(
            |v| propulsion_power(v, &pp),
            Interval::new(0.0, 30.0).unwrap(),
            1_000_000,
        );
        assert!((v - vg).abs() < 1e-4, "{v} vs {vg}");
        assert!((propulsion_power(v, &pp) - pg).abs() < 1e-9);
        assert!((v - 10.21).abs() < 0.1, "{v}");
    }

    #[test]
    fn affordable_slot_allows_everything() {
        let pp = pp();
        let e = 400.0 * 0.2;
        let iv = feasible_speed_intervals(e, 0.2, 30.0, &pp);
        assert_eq!(iv, vec![SpeedInterval { lo: 0.0, hi: 30.0 }]);
    }

    #[test]
    fn tight_slot_is_narrow_around_endurance_speed() {
        let pp = pp();
        let v_me = max_endurance_speed(&pp);
        let e = (propulsion_power(v_me, &pp) + 0.01) * 0.2;
        let iv = feasible_speed_intervals(e, 0.2, 30.0, &pp);
        assert_eq!(iv.len(), 1);
        assert!(iv[0].lo < v_me && v_me < iv[0].hi);
        assert!(iv[0].hi - iv[0].lo < 2.0);
        assert!((propulsion_power(iv[0].lo, &pp) * 0.2 - e).abs() < 1e-9);
        assert!((propulsion_power(iv[0].hi, &pp) * 0.2 - e).abs() < 1e-9);
    }

    #[test]
    fn unaffordable_slot_is_empty() {
        let pp = pp();
        let e = 0.99 * propulsion_power(max_endurance_speed(&pp), &pp) * 0.2;
        assert!(feasible_speed_intervals(e, 0.2, 30.0, &pp).is_empty());
    }

    #[test]
    fn gate_boundary() {
        let pp = pp();
        let mut ledger = EnergyLedger::new(1000.0);
        ledger.record(500.0);
        let slot = propulsion_power(5.0, &pp) * 0.2;
        assert!(feasibility_gate(&ledger, 5.0, 0.2, 500.0 - slot, &pp));
        assert!(!feasibility_gate(&ledger, 5.0, 0.2, 500.0 - slot + 1e-6, &pp));
    }

    proptest! {
        #[test]
        fn power_positive_and_even(v in -40.0f64..40.0) {
            let pp = pp();
            let p = propulsion_power(v, &pp);
            prop_assert!(p > 0.0);
            prop_assert_eq!(p, propulsion_power(-v, &pp));
        }

        #[test]
        fn induced_factor_matches_naive_form(v in 0.0f64..10.0) {
            let b = v * v / (2.0 * 4.03f64.powi(2));
            let naive = ((1.0 + b * b).sqrt() - b).sqrt();
            prop_assert!((induced_factor(v, 4.03) - naive).abs() <= 1e-12);
        }

        #[test]
        fn interval_endpoints_are_affordable(e in 20.0f64..90.0) {
            let pp = pp();
            for iv in feasible_speed_intervals(e, 0.2, 30.0, &pp) {
                prop_assert!(propulsion_power(iv.lo, &pp) * 0.2 <= e + 1e-9);
                prop_assert!(propulsion_power(iv.hi, &pp) * 0.2 <= e + 1e-9);
                prop_assert!(iv.lo <= iv.hi);
            }
        }
    }
}
