//! Cross-checks of every fast path against its slow reference.

use std::fmt;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use pcrb_core::controller::{Policy, Solvers};
use pcrb_core::dynamics::{meas_noise_vars, observables, RelativeState};
use pcrb_core::ekf::{jacobian, update, Prediction};
use pcrb_core::energy::{backup_plan, dp_oracle, max_endurance_speed, propulsion_power, DpGrid};
use pcrb_core::episode::run_episode_with_extras;
use pcrb_core::oracles::{finite_difference_jacobian, fisher_matrix, gain_form_covariance, grid_minimize};
use pcrb_core::pcrb::{fisher_terms, predicted_pcrb, FisherParams, PcrbConvention};
use pcrb_core::polyopt::{minimize_on_interval, solve_moment_sdp, InteriorPointSdp, Interval, Polynomial};
use pcrb_core::scenario::Scenario;

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Treat the SDP backend as unavailable.
    pub no_sdp: bool,
    /// Perturb a₁ in the closed-form information terms only, which the
    /// PCRB check must catch.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass(String),
    Fail(String),
    Skipped(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pass(m) => write!(f, "PASS     {m}"),
            Self::Fail(m) => write!(f, "FAIL     {m}"),
            Self::Skipped(m) => write!(f, "SKIPPED  {m}"),
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub status: Status,
}

fn verdict(ok: bool, msg: String) -> Status {
    if ok {
        Status::Pass(msg)
    } else {
        Status::Fail(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_pd(rng: &mut ChaCha12Rng) -> Matrix2<f64> {
    let l = Matrix2::new(
        rng.random_range(0.05..3.0),
        0.0,
        rng.random_range(-2.0..2.0),
        rng.random_range(0.05..3.0),
    );
    l * l.transpose()
}

fn random_state(rng: &mut ChaCha12Rng) -> RelativeState {
    RelativeState::new(rng.random_range(-200.0..200.0), rng.random_range(-20.0..20.0))
}

fn propulsion() -> Status {
    let pp = Scenario::default().system.propulsion();
    let hover = propulsion_power(0.0, &pp);
    let v_me = max_endurance_speed(&pp);
    verdict(
        (hover - 168.4842).abs() <= 1e-9 && (v_me - 10.21).abs() <= 0.05,
        format!("P(0) = {hover:.4} W, v_me = {v_me:.3} m/s"),
    )
}

fn jacobian_vs_fd() -> Status {
    let sys = Scenario::default().system;
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let at = random_state(&mut rng);
        let j = jacobian(at, sys.h, sys.lambda);
        let fd = finite_difference_jacobian(at, sys.h, sys.lambda, 1e-4);
        for (a, b) in j.iter().zip(fd.iter()) {
            worst = worst.max(if *a == 0.0 { b.abs() } else { rel(*b, *a) });
        }
    }
    verdict(worst <= 1e-5, format!("100 states, worst relative error {worst:.2e}"))
}

fn pcrb_vs_matrix(inject_fault: bool) -> Status {
    let sc = Scenario::default();
    let fp = FisherParams::from_scenario(&sc);
    let closed = if inject_fault {
        FisherParams { a1: fp.a1 * 1.01, ..fp }
    } else {
        fp
    };
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let at = random_state(&mut rng);
        let mp = random_pd(&mut rng);
        let fast =
            match fisher_terms(at, &mp, &closed).and_then(|t| predicted_pcrb(&t, PcrbConvention::MatrixConsistent)) {
                Ok(p) => p,
                Err(e) => return Status::Fail(e.to_string()),
            };
        let Some(inv) = fisher_matrix(at, &mp, &fp).try_inverse() else {
            return Status::Fail("information matrix singular".into());
        };
        worst = worst
            .max(rel(fast.pcrb_x, inv[(0, 0)]))
            .max(rel(fast.pcrb_v, inv[(1, 1)]));
    }
    verdict(worst <= 1e-10, format!("500 states, worst relative error {worst:.2e}"))
}

fn ekf_forms() -> Status {
    let sc = Scenario::default();
    let s = &sc.system;
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let xbreve = RelativeState::new(rng.random_range(-100.0..100.0), rng.random_range(-15.0..15.0));
        let pred = Prediction {
            xbreve,
            mp: random_pd(&mut rng),
        };
        let vars = meas_noise_vars(xbreve, sc.derived.gamma_r, s.h, s.a1, s.a2, s.a3);
        let y = observables(xbreve, s.h, s.lambda).as_vector();
        let info = match update(&pred, &y, &vars, s.h, s.lambda) {
            Ok(b) => b.m,
            Err(e) => return Status::Fail(e.to_string()),
        };
        let gain = gain_form_covariance(&pred, &vars, s.h, s.lambda);
        worst = worst.max((info - gain).abs().max() / gain.abs().max());
    }
    verdict(worst <= 1e-8, format!("100 updates, worst relative error {worst:.2e}"))
}

fn random_poly(rng: &mut ChaCha12Rng) -> (Polynomial, Interval) {
    let degree = rng.random_range(2..=16);
    let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lo = rng.random_range(-1.5..0.5);
    let iv = Interval::new(lo, lo + rng.random_range(0.2..2.0)).expect("ordered bounds");
    (Polynomial::new(coeffs).expect("finite coefficients"), iv)
}

fn roots_vs_grid() -> Status {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let (p, iv) = random_poly(&mut rng);
        let (_, v_root) = match minimize_on_interval(&p, iv) {
            Ok(r) => r,
            Err(e) => return Status::Fail(e.to_string()),
        };
        let (_, v_grid) = grid_minimize(|x| p.eval(x), iv, 20_001);
        // The grid can only be worse than the true minimum.
        worst = worst.max((v_root - v_grid) / (1.0 + v_grid.abs()));
    }
    verdict(
        worst <= 1e-9,
        format!("60 polynomials, worst excess over grid {worst:.2e}"),
    )
}

fn sdp_vs_roots() -> Status {
    let sc = Scenario::default();
    let solvers = Solvers {
        harvest: true,
        ..Solvers::root_oracle()
    };
    let extras = match run_episode_with_extras(&sc, Policy::Proposed, 0, &solvers) {
        Ok((_, ex)) => ex,
        Err(e) => return Status::Fail(e.to_string()),
    };
    let backend = InteriorPointSdp::default();
    let (mut worst_dx, mut worst_dv) = (0.0f64, 0.0f64);
    let problems = extras.inner.iter().step_by(4).take(40);
    let mut n = 0;
    for p in problems {
        let sdp = match solve_moment_sdp(&p.c, p.iv, &backend) {
            Ok(s) => s,
            Err(e) => return Status::Fail(format!("SDP failed: {e}")),
        };
        if let Some(why) = &sdp.fallback {
            return Status::Fail(format!("SDP extraction fell back: {why}"));
        }
        let (x_root, v_root) = match minimize_on_interval(&p.c, p.iv) {
            Ok(r) => r,
            Err(e) => return Status::Fail(e.to_string()),
        };
        let range =
            p.iv.grid(1001)
                .map(|u| p.c.eval(u).abs())
                .fold(f64::MIN_POSITIVE, f64::max);
        worst_dx = worst_dx.max((sdp.x_star - x_root).abs() / p.iv.width().max(f64::MIN_POSITIVE));
        worst_dv = worst_dv.max((p.c.eval(sdp.x_star) - v_root).abs() / range);
        n += 1;
    }
    verdict(
        n > 0 && worst_dx <= 1e-4 && worst_dv <= 1e-6,
        format!("{n} inner problems, worst |Δx|/width {worst_dx:.2e}, objective gap {worst_dv:.2e}"),
    )
}

fn backup_vs_dp() -> Status {
    let pp = Scenario::default().system.propulsion();
    let (dt, v_max) = (0.2, 30.0);
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..8 {
        let slots = rng.random_range(2..=8);
        let reach = slots as f64 * v_max * dt;
        let disp = if i % 4 == 0 {
            0.0
        } else {
            rng.random_range(-0.8..0.8) * reach
        };
        let plan = match backup_plan(0.0, disp, slots, dt, v_max, &pp) {
            Ok(p) => p,
            Err(e) => return Status::Fail(e.to_string()),
        };
        let dp = match dp_oracle(0.0, disp, slots, dt, v_max, &pp, DpGrid::default()) {
            Ok(p) => p,
            Err(e) => return Status::Fail(e.to_string()),
        };
        if plan.e_b < plan.e_actual {
            return Status::Fail(format!("reserve {} below plan energy {}", plan.e_b, plan.e_actual));
        }
        worst = worst.max(rel(plan.e_actual, dp.energy));
    }
    verdict(
        worst <= 0.01,
        format!("8 instances, worst relative gap to DP {worst:.2e}"),
    )
}

pub fn run(opts: Options) -> Vec<Check> {
    let skipped = || Status::Skipped("SDP backend disabled".into());
    vec![
        Check {
            name: "propulsion power model",
            status: propulsion(),
        },
        Check {
            name: "jacobian vs finite differences",
            status: jacobian_vs_fd(),
        },
        Check {
            name: "closed-form PCRB vs matrix inverse",
            status: pcrb_vs_matrix(opts.inject_fault),
        },
        Check {
            name: "information vs gain form update",
            status: ekf_forms(),
        },
        Check {
            name: "polynomial roots vs dense grid",
            status: roots_vs_grid(),
        },
        Check {
            name: "moment SDP vs polynomial roots",
            status: if opts.no_sdp { skipped() } else { sdp_vs_roots() },
        },
        Check {
            name: "backup planner vs DP",
            status: backup_vs_dp(),
        },
    ]
}
