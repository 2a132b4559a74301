//! Minimum-energy trajectory to the final position over the remaining slots,
//! used as the safety reserve.
//!
//! The induced-power term √(√(1+b²) − b) is lifted into an auxiliary
//! variable ξ with ξ² + v²/v_h² ≥ ξ⁻², whose left side is replaced by its
//! first-order expansion at the current iterate. Each convexified problem is
//! solved with a log-barrier Newton method, and the expansion point moves to
//! the new solution until the energy stops decreasing.

use super::{induced_factor, max_endurance_speed, propulsion_power, PropulsionParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BackupPlan {
    pub velocities: Vec<f64>,
    /// Energy of the convexified objective; an upper bound on `e_actual`.
    pub e_b: f64,
    /// Σ P(v)·Δt of the plan.
    pub e_actual: f64,
    pub sca_iterations: usize,
    /// Convexified energy after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
}

const SCA_MAX_ITER: usize = 30;
const SCA_REL_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Problem<'a> {
    pp: &'a PropulsionParams,
    v_max: f64,
    total: f64,
}

#[derive(Clone)]
struct Point {
    v: Vec<f64>,
    xi: Vec<f64>,
}

impl Problem<'_> {
    fn slot_cost(&self, v: f64, xi: f64) -> f64 {
        let pp = self.pp;
        pp.p0 * (1.0 + 3.0 * v * v / (pp.u_tip * pp.u_tip)) + pp.p_i * xi + 0.5 * pp.chi * v.abs() * v * v
    }

    fn cost(&self, z: &Point) -> f64 {
        z.v.iter().zip(&z.xi).map(|(&v, &xi)| self.slot_cost(v, xi)).sum()
    }
}

/// Linearization point of one SCA step.
struct Expansion {
    v: Vec<f64>,
    xi: Vec<f64>,
}

impl Expansion {
    /// Linearized ξ² + v²/v_h² minus ξ⁻², must stay positive.
    fn margin(&self, l: usize, v: f64, xi: f64, vh2: f64) -> f64 {
        let (vr, xr) = (self.v[l], self.xi[l]);
        2.0 * xr * (xi - xr) + xr * xr + 2.0 * vr * (v - vr) / vh2 + vr * vr / vh2 - 1.0 / (xi * xi)
    }
}

fn barrier_value(p: &Problem, e: &Expansion, z: &Point, t: f64) -> Option<f64> {
    let vh2 = p.pp.v_h * p.pp.v_h;
    let mut acc = t * p.cost(z);
    for l in 0..z.v.len() {
        let (v, xi) = (z.v[l], z.xi[l]);
        let c = [xi, e.margin(l, v, xi, vh2), p.v_max - v, p.v_max + v];
        if c.iter().any(|&ci| !(ci > 0.0)) {
            return None;
        }
        acc -= c.iter().map(|ci| ci.ln()).sum::<f64>();
    }
    Some(acc)
}

/// Gradient and 2×2 Hessian of the barrier function for slot `l`.
fn slot_derivatives(p: &Problem, e: &Expansion, z: &Point, l: usize, t: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let pp = p.pp;
    let vh2 = pp.v_h * pp.v_h;
    let (v, xi) = (z.v[l], z.xi[l]);
    let mut g = [
        t * (6.0 * pp.p0 * v / (pp.u_tip * pp.u_tip) + 1.5 * pp.chi * v * v.abs()),
        t * pp.p_i,
    ];
    let mut h = [
        [t * (6.0 * pp.p0 / (pp.u_tip * pp.u_tip) + 3.0 * pp.chi * v.abs()), 0.0],
        [0.0, 0.0],
    ];
    // −ln ξ
    g[1] -= 1.0 / xi;
    h[1][1] += 1.0 / (xi * xi);
    // −ln(margin)
    let c2 = e.margin(l, v, xi, vh2);
    let dc = [2.0 * e.v[l] / vh2, 2.0 * e.xi[l] + 2.0 / (xi * xi * xi)];
    for i in 0..2 {
        g[i] -= dc[i] / c2;
        for k in 0..2 {
            h[i][k] += dc[i] * dc[k] / (c2 * c2);
        }
    }
    h[1][1] += 6.0 / (xi.powi(4) * c2);
    // box
    let (up, dn) = (p.v_max - v, p.v_max + v);
    g[0] += 1.0 / up - 1.0 / dn;
    h[0][0] += 1.0 / (up * up) + 1.0 / (dn * dn);
    (g, h)
}

fn solve2(h: &[[f64; 2]; 2], r: [f64; 2]) -> [f64; 2] {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    [
        (h[1][1] * r[0] - h[0][1] * r[1]) / det,
        (h[0][0] * r[1] - h[1][0] * r[0]) / det,
    ]
}

/// Equality-constrained Newton step. Returns (step, decrement², stationarity).
fn newton_step(p: &Problem, e: &Expansion, z: &Point, t: f64) -> (Point, f64, f64) {
    let m = z.v.len();
    let mut derivs = Vec::with_capacity(m);
    let (mut a_hg, mut a_ha) = (0.0, 0.0);
    for l in 0..m {
        let (g, h) = slot_derivatives(p, e, z, l, t);
        let hg = solve2(&h, g);
        let ha = solve2(&h, [1.0, 0.0]);
        a_hg += hg[0];
        a_ha += ha[0];
        derivs.push((g, h, hg, ha));
    }
    let resid = p.total - z.v.iter().sum::<f64>();
    let nu = (-resid - a_hg) / a_ha;
    let mut step = Point {
        v: vec![0.0; m],
        xi: vec![0.0; m],
    };
    let (mut dec, mut stat) = (0.0, 0.0f64);
    for (l, &(g, h, hg, ha)) in derivs.iter().enumerate().take(m) {
        step.v[l] = -(hg[0] + nu * ha[0]);
        step.xi[l] = -(hg[1] + nu * ha[1]);
        let (dv, dx) = (step.v[l], step.xi[l]);
        dec += dv * (h[0][0] * dv + h[0][1] * dx) + dx * (h[1][0] * dv + h[1][1] * dx);
        stat = stat.max((g[0] + nu).abs()).max(g[1].abs());
    }
    (step, dec, stat / t)
}

fn axpy(z: &Point, a: f64, d: &Point) -> Point {
    Point {
        v: z.v.iter().zip(&d.v).map(|(x, y)| x + a * y).collect(),
        xi: z.xi.iter().zip(&d.xi).map(|(x, y)| x + a * y).collect(),
    }
}

/// Barrier method on one convexified problem, started from a strictly
/// feasible point. Returns the solution and its KKT residual.
fn solve_convexified(p: &Problem, e: &Expansion, start: Point) -> Result<(Point, f64)> {
    let m = start.v.len() as f64;
    let mut z = start;
    let mut t = 1.0;
    let mut best: Option<(Point, f64)> = None;
    loop {
        let mut iters = 0;
        loop {
            let (step, dec, _) = newton_step(p, e, &z, t);
            if dec / 2.0 <= 1e-12 || iters >= 100 {
                break;
            }
            iters += 1;
            // Inside the quadratic convergence region the full step is taken
            // as is; comparing barrier values there is lost in rounding once
            // t·f is large.
            if dec < 0.25 {
                let trial = axpy(&z, 1.0, &step);
                if barrier_value(p, e, &trial, t).is_some() {
                    z = trial;
                    continue;
                }
            }
            let phi0 = barrier_value(p, e, &z, t).ok_or_else(|| Error::Numerical("barrier start infeasible".into()))?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = axpy(&z, alpha, &step);
                if let Some(phi) = barrier_value(p, e, &trial, t) {
                    if phi <= phi0 - 0.25 * alpha * dec {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let (_, dec, stat) = newton_step(p, e, &z, t);
        let f = p.cost(&z);
        let gap = 4.0 * m / t;
        let kkt = (stat / (1.0 + f / m)).max(dec.sqrt() / t).max(gap / (1.0 + f));
        // Centering degrades at the largest t, where the barrier Hessian is
        // badly conditioned; keep the best-certified point on the path.
        if best.as_ref().is_none_or(|b: &(Point, f64)| kkt < b.1) {
            best = Some((z.clone(), kkt));
        }
        if gap <= GAP_TOL * (1.0 + f) {
            break;
        }
        t *= 10.0;
    }
    Ok(best.expect("at least one centering pass"))
}

struct ScaRun {
    z: Point,
    trace: Vec<f64>,
    iterations: usize,
    kkt: f64,
}

fn run_sca(p: &Problem, v0: Vec<f64>, dt: f64) -> Result<ScaRun> {
    let vh = p.pp.v_h;
    let mut exp = Expansion {
        xi: v0.iter().map(|&v| induced_factor(v, vh)).collect(),
        v: v0,
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut best: Option<(Point, f64)> = None;
    let mut iterations = 0;
    for _ in 0..SCA_MAX_ITER {
        let start = Point {
            v: exp.v.clone(),
            xi: exp.xi.iter().map(|x| x * 1.01).collect(),
        };
        let (z, kkt) = solve_convexified(p, &exp, start)?;
        iterations += 1;
        let energy = p.cost(&z) * dt;
        let prev = trace.last().copied();
        if prev.is_some_and(|prev| energy > prev) {
            // Barrier slack only; keep the better iterate.
            break;
        }
        trace.push(energy);
        best = Some((z.clone(), kkt));
        if let Some(prev) = prev {
            if prev - energy <= SCA_REL_TOL * prev.abs() {
                break;
            }
        }
        exp = Expansion { v: z.v, xi: z.xi };
    }
    let (z, kkt) = best.expect("at least one SCA iteration");
    Ok(ScaRun {
        z,
        trace,
        iterations,
        kkt,
    })
}

/// Backup trajectory from `x_start` to `x_f` in `slots` slots. Tries a
/// constant-velocity start and an alternating ± max-endurance start and
/// keeps the plan with the smaller certified energy.
pub fn backup_plan(
    x_start: f64,
    x_f: f64,
    slots: usize,
    dt: f64,
    v_max: f64,
    pp: &PropulsionParams,
) -> Result<BackupPlan> {
    let disp = x_f - x_start;
    let reach = slots as f64 * v_max * dt;
    if disp.abs() > reach + 1e-9 * (1.0 + reach) {
        return Err(Error::Unreachable {
            displacement: disp,
            slots,
            v_max,
        });
    }
    let exact = |vels: Vec<f64>, e_b: f64, iterations, trace, kkt| {
        let e_actual = vels.iter().map(|&v| propulsion_power(v, pp) * dt).sum();
        BackupPlan {
            velocities: vels,
            e_b: f64::max(e_b, e_actual),
            e_actual,
            sca_iterations: iterations,
            objective_trace: trace,
            kkt_residual: kkt,
        }
    };
    if slots == 0 {
        return Ok(exact(Vec::new(), 0.0, 0, Vec::new(), 0.0));
    }
    let total = disp / dt;
    if slots == 1 || disp.abs() >= reach * (1.0 - 1e-12) {
        let vels = if slots == 1 {
            vec![total.clamp(-v_max, v_max)]
        } else {
            vec![v_max.copysign(disp); slots]
        };
        return Ok(exact(vels, 0.0, 0, Vec::new(), 0.0));
    }

    let problem = Problem { pp, v_max, total };
    let mean = total / slots as f64;
    let mut starts = vec![vec![mean; slots]];
    // The optimum mixes slots flown forward and backward near the
    // max-endurance speed; start from the two splits whose net flight is
    // closest to the displacement.
    let v_me = max_endurance_speed(pp);
    let k_star = 0.5 * (slots as f64 + total / v_me);
    let (k_lo, k_hi) = (k_star.floor().max(1.0) as usize, k_star.ceil().max(1.0) as usize);
    let splits = if k_lo == k_hi { vec![k_lo] } else { vec![k_lo, k_hi] };
    for k in splits {
        if k >= slots {
            continue;
        }
        let net = (2.0 * k as f64 - slots as f64) * v_me;
        let shift = (total - net) / slots as f64;
        let split: Vec<f64> = (0..slots).map(|l| if l < k { v_me } else { -v_me } + shift).collect();
        if split.iter().all(|v| v.abs() < v_max) {
            starts.push(split);
        }
    }

    let mut best: Option<BackupPlan> = None;
    for v0 in starts {
        let run = run_sca(&problem, v0, dt)?;
        let mut v = run.z.v.clone();
        let mut xi = run.z.xi.clone();
        // Close the displacement exactly through the last slot.
        let head: f64 = v[..slots - 1].iter().sum();
        v[slots - 1] = (total - head).clamp(-v_max, v_max);
        for l in 0..slots {
            xi[l] = xi[l].max(induced_factor(v[l], pp.v_h));
        }
        let e_b = v.iter().zip(&xi).map(|(&a, &b)| problem.slot_cost(a, b)).sum::<f64>() * dt;
        let plan = exact(v, e_b, run.iterations, run.trace, run.kkt);
        if best.as_ref().is_none_or(|b| plan.e_b < b.e_b) {
            best = Some(plan);
        }
    }
    Ok(best.expect("at least one start"))
}
