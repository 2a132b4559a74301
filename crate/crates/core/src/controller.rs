//! Per-slot decision logic: the reserve-certified proposed policy and the
//! direct-flight benchmark.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{process_cov, UavMotion};
use crate::ekf::{predict, Belief};
use crate::energy::{
    backup_plan, feasibility_gate, feasible_speed_intervals, propulsion_power, BackupPlan, EnergyLedger, BUDGET_SLACK,
};
use crate::error::{Error, Result};
use crate::pcrb::{build_ratio_polys, FisherParams};
use crate::polyopt::{
    dinkelbach_minimize_ratio, DinkelbachOptions, DinkelbachResult, InnerProblem, InteriorPointSdp, Interval,
    SdpBackend,
};
use crate::scenario::{MissionParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Proposed,
    Benchmark,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Optimizing,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeTag {
    Candidate,
    BackupFallback,
    DirectFlight,
    ForcedTerminal,
}

impl ModeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeTag::Candidate => "CANDIDATE",
            ModeTag::BackupFallback => "BACKUP_FALLBACK",
            ModeTag::DirectFlight => "DIRECT_FLIGHT",
            ModeTag::ForcedTerminal => "FORCED_TERMINAL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ModeTag::Candidate,
            ModeTag::BackupFallback,
            ModeTag::DirectFlight,
            ModeTag::ForcedTerminal,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ModeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A backup plan together with the slot its first velocity belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredBackup {
    pub first_slot: usize,
    pub plan: BackupPlan,
}

impl StoredBackup {
    pub fn velocity_for(&self, slot: usize) -> Option<f64> {
        slot.checked_sub(self.first_slot)
            .and_then(|i| self.plan.velocities.get(i).copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Slot about to be decided, 1-based.
    pub slot: usize,
    pub uav: UavMotion,
    pub belief: Belief,
    pub ledger: EnergyLedger,
    pub last_backup: Option<StoredBackup>,
    pub mode: Mode,
}

impl ControllerState {
    pub fn initial(sc: &Scenario, belief: Belief) -> Self {
        Self {
            slot: 1,
            uav: UavMotion {
                pos: sc.mission.x_i,
                vel: 0.0,
            },
            belief,
            ledger: EnergyLedger::new(sc.mission.e_tot),
            last_backup: None,
            mode: Mode::Optimizing,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SlotDiagnostics {
    pub interval: Option<Interval>,
    pub dinkelbach_iterations: usize,
    pub sdp_fallbacks: usize,
    pub global_flag: Option<bool>,
    /// Gate outcome (proposed) or reserve condition (benchmark).
    pub gate: Option<bool>,
    /// Reserve energy the decision was certified against.
    pub e_b: Option<f64>,
    pub inner: Vec<InnerProblem>,
    /// One entry per Dinkelbach run, kept only when harvesting.
    pub runs: Vec<DinkelbachTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachTrace {
    pub iterations: usize,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SlotDecision {
    pub v_applied: f64,
    pub mode_tag: ModeTag,
    pub diagnostics: SlotDiagnostics,
}

/// Solver configuration shared by all slots of an episode.
#[derive(Clone)]
pub struct Solvers {
    /// Moment-SDP backend for the inner problems; `None` uses the root oracle.
    pub sdp: Option<Arc<dyn SdpBackend>>,
    pub dinkelbach: DinkelbachOptions,
    /// Keep every inner problem in the slot diagnostics.
    pub harvest: bool,
}

impl Default for Solvers {
    fn default() -> Self {
        Self {
            sdp: Some(Arc::new(InteriorPointSdp::default())),
            dinkelbach: DinkelbachOptions::default(),
            harvest: false,
        }
    }
}

impl Solvers {
    pub fn root_oracle() -> Self {
        Self {
            sdp: None,
            ..Self::default()
        }
    }

    fn minimize(&self, polys: &crate::pcrb::RatioPolys, iv: Interval) -> Result<DinkelbachResult> {
        dinkelbach_minimize_ratio(polys, iv, &self.dinkelbach, self.sdp.as_deref())
    }
}

/// (η, ω): the predicted relative position with zero platform speed this
/// slot, and the offset of the final position seen from it.
pub fn slot_geometry(state: &ControllerState, mission: &MissionParams) -> (f64, f64) {
    let dt = mission.dt;
    let eta = state.belief.xhat.x + state.belief.xhat.v * dt + state.uav.vel * dt;
    let omega = state.uav.pos + eta - mission.x_f;
    (eta, omega)
}

/// Admissible predicted positions x̆ for the current slot: one slot of
/// travel from η, and close enough to ω that the final position stays
/// reachable.
pub fn candidate_bounds(state: &ControllerState, mission: &MissionParams) -> Result<Interval> {
    let n = state.slot;
    if n == 0 || n > mission.n_slots {
        return Err(Error::InvalidParam {
            key: "slot",
            reason: format!("slot {n} outside 1..={}", mission.n_slots),
        });
    }
    let (eta, omega) = slot_geometry(state, mission);
    let step = mission.step_reach();
    let rest = (mission.n_slots - n) as f64 * step;
    let lo = (eta - step).max(omega - rest);
    let hi = (eta + step).min(omega + rest);
    if lo <= hi {
        return Ok(Interval { lo, hi });
    }
    if lo - hi <= 1e-9 * (1.0 + lo.abs()) {
        // Touching intervals that cross only through rounding.
        let mid = 0.5 * (lo + hi);
        return Ok(Interval { lo: mid, hi: mid });
    }
    Err(Error::EmptyInterval { lo, hi })
}

struct Shared {
    dt: f64,
    v_max: f64,
    n_slots: usize,
    x_f: f64,
    pp: crate::energy::PropulsionParams,
}

impl Shared {
    fn new(sc: &Scenario) -> Self {
        Self {
            dt: sc.mission.dt,
            v_max: sc.mission.v_max,
            n_slots: sc.mission.n_slots,
            x_f: sc.mission.x_f,
            pp: sc.system.propulsion(),
        }
    }
}

fn apply(state: &ControllerState, v: f64, sh: &Shared) -> ControllerState {
    let mut next = state.clone();
    next.ledger.record(propulsion_power(v, &sh.pp) * sh.dt);
    next.uav = UavMotion {
        pos: state.uav.pos + v * sh.dt,
        vel: v,
    };
    next.slot += 1;
    next
}

fn forced_terminal(state: &ControllerState, sh: &Shared) -> SlotDecision {
    SlotDecision {
        v_applied: ((sh.x_f - state.uav.pos) / sh.dt).clamp(-sh.v_max, sh.v_max),
        mode_tag: ModeTag::ForcedTerminal,
        diagnostics: SlotDiagnostics::default(),
    }
}

/// Minimizes the predicted weighted PCRB over `pieces` (sub-intervals of
/// `iv`) and returns the best solve.
fn solve_candidate(
    state: &ControllerState,
    sc: &Scenario,
    solvers: &Solvers,
    iv: Interval,
    pieces: &[Interval],
    diag: &mut SlotDiagnostics,
) -> Result<Option<DinkelbachResult>> {
    let qp = process_cov(sc.system.q_tilde, sc.mission.dt);
    let mp = predict(&state.belief, 0.0, sc.mission.dt, &qp).mp;
    let polys = build_ratio_polys(
        state.belief.xhat.x,
        sc.mission.dt,
        &mp,
        &FisherParams::from_scenario(sc),
        sc.mission.alpha,
        sc.convention,
        iv.normalizing_frame(),
    )?;
    let mut best: Option<DinkelbachResult> = None;
    for piece in pieces {
        let mut r = solvers.minimize(&polys, *piece)?;
        diag.dinkelbach_iterations += r.iterations;
        diag.sdp_fallbacks += r.sdp_fallbacks;
        if solvers.harvest {
            diag.inner.append(&mut r.inner);
            diag.runs.push(DinkelbachTrace {
                iterations: r.iterations,
                zeta: r.zeta_trace.clone(),
            });
        }
        if best.as_ref().is_none_or(|b| r.ratio < b.ratio) {
            best = Some(r);
        }
    }
    diag.global_flag = best.as_ref().map(|b| b.global_flag);
    Ok(best)
}

/// One slot of the proposed policy. The returned state carries the new
/// platform motion and ledger; the belief is left for the caller to update
/// once the slot's measurement is in.
pub fn proposed_step(
    state: &ControllerState,
    sc: &Scenario,
    solvers: &Solvers,
) -> Result<(SlotDecision, ControllerState)> {
    let sh = Shared::new(sc);
    let n = state.slot;
    let iv = candidate_bounds(state, &sc.mission)?;

    if state.mode == Mode::Fallback {
        let stored = state
            .last_backup
            .as_ref()
            .ok_or_else(|| Error::Numerical("fallback mode without a stored plan".into()))?;
        let v = stored
            .velocity_for(n)
            .ok_or_else(|| Error::Numerical(format!("stored plan does not cover slot {n}")))?;
        let decision = SlotDecision {
            v_applied: v,
            mode_tag: ModeTag::BackupFallback,
            diagnostics: SlotDiagnostics::default(),
        };
        let next = apply(state, v, &sh);
        return Ok((decision, next));
    }
    if n == sh.n_slots {
        let decision = forced_terminal(state, &sh);
        let next = apply(state, decision.v_applied, &sh);
        return Ok((decision, next));
    }

    let mut diag = SlotDiagnostics {
        interval: Some(iv),
        ..Default::default()
    };
    let (eta, _) = slot_geometry(state, &sc.mission);
    let best = solve_candidate(state, sc, solvers, iv, &[iv], &mut diag)?.expect("one piece always yields a solve");
    let v_c = ((eta - best.x_star) / sh.dt).clamp(-sh.v_max, sh.v_max);
    let x_c = state.uav.pos + v_c * sh.dt;
    let plan = backup_plan(x_c, sh.x_f, sh.n_slots - n, sh.dt, sh.v_max, &sh.pp)?;
    let pass = feasibility_gate(&state.ledger, v_c, sh.dt, plan.e_b, &sh.pp);
    diag.gate = Some(pass);
    diag.e_b = Some(plan.e_b);

    if pass {
        let mut next = apply(state, v_c, &sh);
        next.last_backup = Some(StoredBackup {
            first_slot: n + 1,
            plan,
        });
        let decision = SlotDecision {
            v_applied: v_c,
            mode_tag: ModeTag::Candidate,
            diagnostics: diag,
        };
        return Ok((decision, next));
    }

    let stored = match &state.last_backup {
        Some(s) => s.clone(),
        None => {
            // Nothing certified yet: plan the whole remaining flight now.
            let whole = backup_plan(state.uav.pos, sh.x_f, sh.n_slots - n + 1, sh.dt, sh.v_max, &sh.pp)?;
            if state.ledger.consumed + whole.e_actual > state.ledger.budget + BUDGET_SLACK {
                return Err(Error::MissionInfeasible(format!(
                    "cheapest flight to the final position needs {:.3} J, budget {:.3} J",
                    whole.e_actual,
                    state.ledger.remaining()
                )));
            }
            StoredBackup {
                first_slot: n,
                plan: whole,
            }
        }
    };
    let v = stored
        .velocity_for(n)
        .ok_or_else(|| Error::Numerical(format!("stored plan does not cover slot {n}")))?;
    let mut next = apply(state, v, &sh);
    next.mode = Mode::Fallback;
    next.last_backup = Some(stored);
    let decision = SlotDecision {
        v_applied: v,
        mode_tag: ModeTag::BackupFallback,
        diagnostics: diag,
    };
    Ok((decision, next))
}

/// One slot of the benchmark: greedy PCRB minimization under the per-slot
/// energy cap, switching to straight flight to the final position when the
/// remaining energy no longer covers it with a one-slot margin.
pub fn benchmark_step(
    state: &ControllerState,
    sc: &Scenario,
    solvers: &Solvers,
) -> Result<(SlotDecision, ControllerState)> {
    let sh = Shared::new(sc);
    let n = state.slot;
    let iv = candidate_bounds(state, &sc.mission)?;
    if n == sh.n_slots {
        let decision = forced_terminal(state, &sh);
        let next = apply(state, decision.v_applied, &sh);
        return Ok((decision, next));
    }

    let (eta, _) = slot_geometry(state, &sc.mission);
    let remaining = state.ledger.remaining();
    let mut pieces = Vec::new();
    for s in feasible_speed_intervals(remaining, sh.dt, sh.v_max, &sh.pp) {
        let below = Interval {
            lo: eta - s.hi * sh.dt,
            hi: eta - s.lo * sh.dt,
        };
        let above = Interval {
            lo: eta + s.lo * sh.dt,
            hi: eta + s.hi * sh.dt,
        };
        for piece in [below, above] {
            if let Some(p) = piece.intersect(&iv) {
                if !pieces.contains(&p) {
                    pieces.push(p);
                }
            }
        }
    }
    let mut diag = SlotDiagnostics {
        interval: Some(iv),
        ..Default::default()
    };

    let rest = (sh.n_slots - n) as f64;
    let slot_worst = propulsion_power(sh.v_max, &sh.pp).max(propulsion_power(0.0, &sh.pp)) * sh.dt;
    let mut chosen = None;
    if let Some(best) = solve_candidate(state, sc, solvers, iv, &pieces, &mut diag)? {
        let v_c = ((eta - best.x_star) / sh.dt).clamp(-sh.v_max, sh.v_max);
        let x_c = state.uav.pos + v_c * sh.dt;
        let v_df = (sh.x_f - x_c) / (rest * sh.dt);
        let reserve = rest * propulsion_power(v_df, &sh.pp) * sh.dt;
        let ok = remaining > slot_worst + reserve;
        diag.gate = Some(ok);
        diag.e_b = Some(reserve);
        if ok {
            chosen = Some(v_c);
        }
    }

    let (v, tag) = match chosen {
        Some(v) => (v, ModeTag::Candidate),
        None => {
            let v = (sh.x_f - state.uav.pos) / ((rest + 1.0) * sh.dt);
            let need = (rest + 1.0) * propulsion_power(v, &sh.pp) * sh.dt;
            if need > remaining + BUDGET_SLACK {
                return Err(Error::MissionInfeasible(format!(
                    "direct flight needs {need:.3} J, {remaining:.3} J left"
                )));
            }
            (v.clamp(-sh.v_max, sh.v_max), ModeTag::DirectFlight)
        }
    };
    let decision = SlotDecision {
        v_applied: v,
        mode_tag: tag,
        diagnostics: diag,
    };
    let next = apply(state, v, &sh);
    Ok((decision, next))
}

pub fn step(
    policy: Policy,
    state: &ControllerState,
    sc: &Scenario,
    solvers: &Solvers,
) -> Result<(SlotDecision, ControllerState)> {
    match policy {
        Policy::Proposed => proposed_step(state, sc, solvers),
        Policy::Benchmark => benchmark_step(state, sc, solvers),
    }
}
