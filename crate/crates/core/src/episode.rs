//! Closed-loop simulation of one mission and aggregate statistics.

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::controller::{step, ControllerState, DinkelbachTrace, ModeTag, Policy, Solvers};
use crate::dynamics::{
    evolve_relative, meas_noise_vars, process_cov, sample_process_noise, synth_measurement, RelativeState,
};
use crate::ekf::{predict, update, Belief};
use crate::error::Result;
use crate::pcrb::{fisher_terms, predicted_pcrb, weighted_objective, FisherParams};
use crate::polyopt::InnerProblem;
use crate::scenario::Scenario;

/// One row of the per-slot log.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub trial: u64,
    pub slot: usize,
    pub time: f64,
    pub policy: Policy,
    pub mode_tag: ModeTag,
    pub target_pos: f64,
    pub uav_pos: f64,
    pub uav_vel: f64,
    pub rel_x: f64,
    pub rel_v: f64,
    pub est_x: f64,
    pub est_v: f64,
    pub pred_pcrb_x: f64,
    pub pred_pcrb_v: f64,
    pub actual_pcrb_x: f64,
    pub actual_pcrb_v: f64,
    pub weighted_actual: f64,
    pub slot_energy: f64,
    pub cumulative_energy: f64,
    pub e_b: Option<f64>,
    pub gate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub trial: u64,
    pub policy: Policy,
    pub records: Vec<SlotRecord>,
}

/// Extra per-episode output that does not go into the CSV.
#[derive(Debug, Clone, Default)]
pub struct EpisodeExtras {
    pub inner: Vec<InnerProblem>,
    pub sdp_fallbacks: usize,
    pub dinkelbach_iterations: Vec<usize>,
    pub runs: Vec<DinkelbachTrace>,
}

impl EpisodeLog {
    pub fn total_energy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_energy)
    }

    pub fn final_position(&self) -> Option<f64> {
        self.records.last().map(|r| r.uav_pos)
    }

    /// First slot whose tag is not CANDIDATE.
    pub fn turning_point(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.mode_tag != ModeTag::Candidate)
            .map(|r| r.slot)
    }

    /// Cumulative energy after `slot` slots (0 for slot 0).
    pub fn energy_through(&self, slot: usize) -> f64 {
        if slot == 0 {
            return 0.0;
        }
        self.records[slot.min(self.records.len()) - 1].cumulative_energy
    }

    pub fn mean_weighted_actual(&self) -> f64 {
        mean(self.records.iter().map(|r| r.weighted_actual))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Seed of trial `trial` derived from the scenario seed.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base.wrapping_add(trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

const STREAM_INIT: u64 = 0;
const STREAM_PROCESS: u64 = 1;
const STREAM_MEASUREMENT: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run_episode(sc: &Scenario, policy: Policy, trial: u64, solvers: &Solvers) -> Result<EpisodeLog> {
    run_episode_with_extras(sc, policy, trial, solvers).map(|(log, _)| log)
}

/// Runs one mission. Target motion, measurement noise and the initial
/// estimate error come from separate streams keyed only by the trial seed,
/// so both policies see the same randomness.
pub fn run_episode_with_extras(
    sc: &Scenario,
    policy: Policy,
    trial: u64,
    solvers: &Solvers,
) -> Result<(EpisodeLog, EpisodeExtras)> {
    let seed = trial_seed(sc.init.seed, trial);
    let mut rng_init = stream(seed, STREAM_INIT);
    let mut rng_proc = stream(seed, STREAM_PROCESS);
    let mut rng_meas = stream(seed, STREAM_MEASUREMENT);

    let sys = &sc.system;
    let m = &sc.mission;
    let fp = FisherParams::from_scenario(sc);
    let qp = process_cov(sys.q_tilde, m.dt);
    let noise_at = |rel: RelativeState| meas_noise_vars(rel, fp.gamma_r, sys.h, sys.a1, sys.a2, sys.a3);

    let mut truth = RelativeState::new(m.x_t0 - m.x_i, m.v_t0);
    let [sx, sv] = sc.init.init_perturb_std;
    let dx: f64 = rng_init.sample(StandardNormal);
    let dv: f64 = rng_init.sample(StandardNormal);
    let belief = Belief {
        xhat: RelativeState::new(truth.x + sx * dx, truth.v + sv * dv),
        m: Matrix2::new(sc.init.m0_diag[0], 0.0, 0.0, sc.init.m0_diag[1]),
    };
    let mut state = ControllerState::initial(sc, belief);
    let mut records = Vec::with_capacity(m.n_slots);
    let mut extras = EpisodeExtras::default();

    for n in 1..=m.n_slots {
        let (mut decision, mut next) = step(policy, &state, sc, solvers)?;
        let u = decision.v_applied - state.uav.vel;
        truth = evolve_relative(truth, u, m.dt, sample_process_noise(&qp, &mut rng_proc));
        let pred = predict(&state.belief, u, m.dt, &qp);
        let y = synth_measurement(truth, sys.h, sys.lambda, &noise_at(truth), &mut rng_meas);
        let post = update(&pred, &y, &noise_at(pred.xbreve), sys.h, sys.lambda)?;
        let pcrb = predicted_pcrb(&fisher_terms(pred.xbreve, &pred.mp, &fp)?, sc.convention)?;
        next.belief = post;

        let d = &mut decision.diagnostics;
        extras.sdp_fallbacks += d.sdp_fallbacks;
        if d.dinkelbach_iterations > 0 {
            extras.dinkelbach_iterations.push(d.dinkelbach_iterations);
        }
        extras.inner.append(&mut d.inner);
        extras.runs.append(&mut d.runs);

        let actual_x = post.m[(0, 0)];
        let actual_v = post.m[(1, 1)];
        records.push(SlotRecord {
            trial,
            slot: n,
            time: n as f64 * m.dt,
            policy,
            mode_tag: decision.mode_tag,
            target_pos: next.uav.pos + truth.x,
            uav_pos: next.uav.pos,
            uav_vel: next.uav.vel,
            rel_x: truth.x,
            rel_v: truth.v,
            est_x: post.xhat.x,
            est_v: post.xhat.v,
            pred_pcrb_x: pcrb.pcrb_x,
            pred_pcrb_v: pcrb.pcrb_v,
            actual_pcrb_x: actual_x,
            actual_pcrb_v: actual_v,
            weighted_actual: weighted_objective(
                &crate::pcrb::PcrbPair {
                    pcrb_x: actual_x,
                    pcrb_v: actual_v,
                },
                m.alpha,
            ),
            slot_energy: next.ledger.consumed - state.ledger.consumed,
            cumulative_energy: next.ledger.consumed,
            e_b: d.e_b,
            gate: d.gate,
        });
        state = next;
    }
    Ok((EpisodeLog { trial, policy, records }, extras))
}

/// Aggregates over the episodes of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: Policy,
    pub trials: usize,
    pub mean_weighted_actual_pcrb: f64,
    pub energy_mean: f64,
    pub energy_max: f64,
    pub turning_points: Vec<Option<usize>>,
    pub turning_point_mean: f64,
    pub terminal_error_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policies: Vec<PolicySummary>,
}

/// Summary of `logs` (all of one policy, ordered by trial).
pub fn summarize(policy: Policy, logs: &[EpisodeLog], x_f: f64) -> PolicySummary {
    let all_slots = logs.iter().flat_map(|l| l.records.iter().map(|r| r.weighted_actual));
    let turning: Vec<Option<usize>> = logs.iter().map(EpisodeLog::turning_point).collect();
    PolicySummary {
        policy,
        trials: logs.len(),
        mean_weighted_actual_pcrb: mean(all_slots),
        energy_mean: mean(logs.iter().map(EpisodeLog::total_energy)),
        energy_max: logs
            .iter()
            .map(EpisodeLog::total_energy)
            .fold(f64::NEG_INFINITY, f64::max),
        turning_point_mean: mean(turning.iter().flatten().map(|&s| s as f64)),
        turning_points: turning,
        terminal_error_max: logs
            .iter()
            .filter_map(|l| l.final_position())
            .map(|p| (p - x_f).abs())
            .fold(0.0, f64::max),
    }
}
