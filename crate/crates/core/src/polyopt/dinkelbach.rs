//! Maximization of a(u)/b(u) by Dinkelbach's parametric method, i.e.
//! minimization of the objective b/a. Each step minimizes ζ·b − a.

use super::moment::solve_moment_sdp;
use super::poly::{minimize_on_interval, Interval, Polynomial};
use super::sdp::SdpBackend;
use crate::error::{Error, Result};
use crate::pcrb::RatioPolys;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DinkelbachOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
        }
    }
}

/// One inner problem: minimize `c` over `iv`, both in the frame variable.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    pub c: Polynomial,
    pub iv: Interval,
}

#[derive(Debug, Clone)]
pub struct DinkelbachResult {
    pub x_star: f64,
    /// b/a at x_star, the minimized objective.
    pub ratio: f64,
    /// ζ₀, ζ₁, … (each an a/b value; non-decreasing).
    pub zeta_trace: Vec<f64>,
    /// a concave and b convex on the interval, so the stationary point is global.
    pub global_flag: bool,
    pub iterations: usize,
    pub sdp_fallbacks: usize,
    pub inner: Vec<InnerProblem>,
}

const POSITIVITY_GRID: usize = 1000;
const CURVATURE_GRID: usize = 64;

/// Minimizes b/a over `iv` (given in x). With a backend the inner problems
/// go through the moment SDP, falling back to the root oracle if the SDP
/// fails; without one the root oracle is used directly.
pub fn dinkelbach_minimize_ratio(
    polys: &RatioPolys,
    iv: Interval,
    opts: &DinkelbachOptions,
    sdp: Option<&dyn SdpBackend>,
) -> Result<DinkelbachResult> {
    let ivu = polys.frame.interval_to_u(&iv);
    let (a, b) = (&polys.a, &polys.b);
    for u in ivu.grid(POSITIVITY_GRID) {
        let (av, bv) = (a.eval(u), b.eval(u));
        if !(av > 0.0 && bv > 0.0) {
            return Err(Error::Dinkelbach(format!(
                "ratio polynomials not positive at x = {} (a = {av:e}, b = {bv:e})",
                polys.frame.to_x(u)
            )));
        }
    }
    let (a2, b2) = (a.derivative().derivative(), b.derivative().derivative());
    let global_flag = ivu.grid(CURVATURE_GRID).all(|u| a2.eval(u) <= 0.0 && b2.eval(u) >= 0.0);

    let zeta_of = |u: f64| a.eval(u) / b.eval(u);
    let mut u_best = ivu.mid();
    let mut zeta = zeta_of(u_best);
    let mut trace = vec![zeta];
    let mut inner = Vec::new();
    let mut fallbacks = 0;
    let mut iterations = 0;

    if !ivu.is_degenerate() {
        for k in 0..opts.max_iter {
            iterations = k + 1;
            let c = b.scale(zeta).sub(a);
            let u_k = match sdp {
                Some(backend) => match solve_moment_sdp(&c, ivu, backend) {
                    Ok(sol) => {
                        if sol.fallback.is_some() {
                            fallbacks += 1;
                        }
                        sol.x_star
                    }
                    Err(_) => {
                        fallbacks += 1;
                        minimize_on_interval(&c, ivu)?.0
                    }
                },
                None => minimize_on_interval(&c, ivu)?.0,
            };
            inner.push(InnerProblem { c, iv: ivu });
            let next = zeta_of(u_k);
            let slack = opts.tol * (1.0 + zeta.abs());
            if next < zeta - 10.0 * slack {
                return Err(Error::Dinkelbach(format!(
                    "parameter decreased from {zeta:e} to {next:e}"
                )));
            }
            if next <= zeta {
                // Inner minimum reached to rounding; the previous point stands.
                break;
            }
            u_best = u_k;
            let step = next - zeta;
            zeta = next;
            trace.push(zeta);
            if step <= slack {
                break;
            }
            if k + 1 == opts.max_iter {
                return Err(Error::Dinkelbach(format!(
                    "no convergence in {} iterations (last step {step:e})",
                    opts.max_iter
                )));
            }
        }
    }

    let x_star = iv.clamp(polys.frame.to_x(u_best));
    Ok(DinkelbachResult {
        x_star,
        ratio: 1.0 / zeta,
        zeta_trace: trace,
        global_flag,
        iterations,
        sdp_fallbacks: fallbacks,
        inner,
    })
}
