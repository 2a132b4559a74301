//! Brute-force dynamic program over a velocity grid, used to check the
//! backup planner.

use super::{propulsion_power, PropulsionParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGrid {
    pub v_step: f64,
    /// Displacement resolution; v_step·Δt must be a whole multiple of it.
    pub x_step: f64,
}

impl Default for DpGrid {
    fn default() -> Self {
        Self {
            v_step: 0.05,
            x_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpPlan {
    pub velocities: Vec<f64>,
    pub energy: f64,
}

const MAX_STATES: u64 = 100_000_000;

/// Minimum-energy velocity sequence on the grid. All slots but the last
/// use grid velocities; the last one closes the displacement exactly.
pub fn dp_oracle(
    x_start: f64,
    x_f: f64,
    slots: usize,
    dt: f64,
    v_max: f64,
    pp: &PropulsionParams,
    grid: DpGrid,
) -> Result<DpPlan> {
    let disp = x_f - x_start;
    let reach = slots as f64 * v_max * dt;
    if disp.abs() > reach + 1e-9 || (slots == 0 && disp.abs() > 1e-9) {
        return Err(Error::Unreachable {
            displacement: disp,
            slots,
            v_max,
        });
    }
    if slots == 0 {
        return Ok(DpPlan {
            velocities: Vec::new(),
            energy: 0.0,
        });
    }
    let ratio = grid.v_step * dt / grid.x_step;
    let unit = ratio.round();
    if unit < 1.0 || (ratio - unit).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParam {
            key: "x_step",
            reason: format!("v_step·dt / x_step = {ratio} is not a positive integer"),
        });
    }
    let unit = unit as i64;
    let k_max = (v_max / grid.v_step + 1e-9).floor() as i64;
    let free = slots - 1;
    let span = free as i64 * k_max * unit;
    let n_states = (2 * span + 1) as u64;
    if n_states.saturating_mul(slots as u64) > MAX_STATES {
        return Err(Error::StateSpaceOverflow {
            states: n_states.saturating_mul(slots as u64),
        });
    }
    let n = n_states as usize;
    let slot_energy: Vec<f64> = (-k_max..=k_max)
        .map(|k| propulsion_power(k as f64 * grid.v_step, pp) * dt)
        .collect();
    let reachable = |state: i64, done: usize| {
        let left = (slots - done) as f64 * v_max * dt;
        (disp - state as f64 * grid.x_step).abs() <= left + 1e-9
    };

    let mut cost = vec![f64::INFINITY; n];
    cost[span as usize] = 0.0;
    let mut choice: Vec<Vec<i32>> = Vec::with_capacity(free);
    for step in 0..free {
        let mut next = vec![f64::INFINITY; n];
        let mut pick = vec![0i32; n];
        let lim = step as i64 * k_max * unit;
        for s in -lim..=lim {
            let c = cost[(s + span) as usize];
            if !c.is_finite() {
                continue;
            }
            for k in -k_max..=k_max {
                let ns = s + k * unit;
                if !reachable(ns, step + 1) {
                    continue;
                }
                let idx = (ns + span) as usize;
                let total = c + slot_energy[(k + k_max) as usize];
                if total < next[idx] {
                    next[idx] = total;
                    pick[idx] = k as i32;
                }
            }
        }
        cost = next;
        choice.push(pick);
    }

    let mut best: Option<(i64, f64, f64)> = None;
    for s in -span..=span {
        let c = cost[(s + span) as usize];
        if !c.is_finite() {
            continue;
        }
        let v_last = (disp - s as f64 * grid.x_step) / dt;
        if v_last.abs() > v_max + 1e-9 {
            continue;
        }
        let total = c + propulsion_power(v_last, pp) * dt;
        if best.is_none_or(|b| total < b.1) {
            best = Some((s, total, v_last.clamp(-v_max, v_max)));
        }
    }
    let (mut s, energy, v_last) = best.ok_or(Error::Unreachable {
        displacement: disp,
        slots,
        v_max,
    })?;
    let mut velocities = vec![0.0; slots];
    velocities[slots - 1] = v_last;
    for step in (0..free).rev() {
        let k = choice[step][(s + span) as usize] as i64;
        velocities[step] = k as f64 * grid.v_step;
        s -= k * unit;
    }
    Ok(DpPlan { velocities, energy })
}
