//! Moment relaxation of univariate polynomial minimization over an interval.
//!
//! For p of degree ≤ 16 on [lo, hi] the relaxation in the moments
//! t₁..t₁₇ with the two localizing Hankel constraints is exact, and an
//! optimal moment vector of a point mass gives the minimizer as t₁.

use nalgebra::{DMatrix, DVector};

use super::poly::{minimize_normalized, AffineFrame, Interval, Polynomial};
use super::sdp::{LmiBlock, SdpBackend, SdpProblem};
use crate::error::{Error, Result};

/// Hankel order: L and M are HANKEL_DIM × HANKEL_DIM.
pub const HANKEL_DIM: usize = 9;
/// Number of free moments t₁..t₁₇.
pub const MOMENT_COUNT: usize = 2 * HANKEL_DIM - 1;
pub const MAX_OBJECTIVE_DEGREE: usize = 16;

const SDP_TOL: f64 = 1e-7;
const VERIFY_TOL: f64 = 1e-6;

/// Moments t₀ = 1, t₁, …, t₁₇.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector(pub Vec<f64>);

impl MomentVector {
    /// Moments of a point mass at `u`.
    pub fn dirac(u: f64) -> Self {
        MomentVector((0..=MOMENT_COUNT).map(|q| u.powi(q as i32)).collect())
    }

    pub fn first(&self) -> f64 {
        self.0[1]
    }
}

/// L[i][j] = t_{i+j} and M[i][j] = t_{i+j+1}.
pub fn hankel_pair(t: &MomentVector) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = DMatrix::from_fn(HANKEL_DIM, HANKEL_DIM, |i, j| t.0[i + j]);
    let m = DMatrix::from_fn(HANKEL_DIM, HANKEL_DIM, |i, j| t.0[i + j + 1]);
    (l, m)
}

/// The two localizing constraints hi·L − M ⪰ 0 and M − lo·L ⪰ 0 written as
/// LMIs in t₁..t₁₇.
pub fn localizing_blocks(lo: f64, hi: f64) -> Vec<LmiBlock> {
    let pattern = |shift: usize, q: usize| {
        DMatrix::from_fn(
            HANKEL_DIM,
            HANKEL_DIM,
            |i, j| {
                if i + j + shift == q {
                    1.0
                } else {
                    0.0
                }
            },
        )
    };
    let make = |sl: f64, sm: f64| {
        // sl·L + sm·M; t₀ = 1 only appears in L[0][0].
        let mut f0 = DMatrix::zeros(HANKEL_DIM, HANKEL_DIM);
        f0[(0, 0)] = sl;
        let fi = (1..=MOMENT_COUNT)
            .map(|q| pattern(0, q) * sl + pattern(1, q) * sm)
            .collect();
        LmiBlock { f0, fi }
    };
    vec![make(hi, -1.0), make(-lo, 1.0)]
}

/// Rows hold the monomial coefficients of the Chebyshev polynomials
/// T₀..T₈, each scaled to unit norm. Congruence with this matrix leaves the constraints equivalent
/// but is far better conditioned than the raw monomial Hankel form.
fn chebyshev_rows() -> DMatrix<f64> {
    let mut t = DMatrix::zeros(HANKEL_DIM, HANKEL_DIM);
    t[(0, 0)] = 1.0;
    t[(1, 1)] = 1.0;
    for r in 2..HANKEL_DIM {
        for c in 0..HANKEL_DIM {
            let shifted = if c > 0 { 2.0 * t[(r - 1, c - 1)] } else { 0.0 };
            t[(r, c)] = shifted - t[(r - 2, c)];
        }
    }
    for r in 0..HANKEL_DIM {
        let norm = t.row(r).norm();
        t.row_mut(r).scale_mut(1.0 / norm);
    }
    t
}

/// Applies T·F·Tᵀ to every matrix of the blocks.
pub fn chebyshev_congruence(blocks: Vec<LmiBlock>) -> Vec<LmiBlock> {
    let t = chebyshev_rows();
    let tt = t.transpose();
    let apply = |f: &DMatrix<f64>| &t * f * &tt;
    blocks
        .into_iter()
        .map(|b| LmiBlock {
            f0: apply(&b.f0),
            fi: b.fi.iter().map(apply).collect(),
        })
        .collect()
}

/// B with uʲ = Σₖ B[j][k]·Tₖ(u) for j, k ≤ 17, from u·Tₖ = (Tₖ₊₁ + Tₖ₋₁)/2.
fn monomials_in_chebyshev() -> DMatrix<f64> {
    let n = MOMENT_COUNT + 1;
    let mut b = DMatrix::zeros(n, n);
    b[(0, 0)] = 1.0;
    for j in 0..n - 1 {
        for k in 0..n - 1 {
            let w = b[(j, k)];
            if w == 0.0 {
                continue;
            }
            if k == 0 {
                b[(j + 1, 1)] += w;
            } else {
                b[(j + 1, k + 1)] += 0.5 * w;
                b[(j + 1, k - 1)] += 0.5 * w;
            }
        }
    }
    b
}

/// Rewrites F0 + Σ tⱼFⱼ (t₀ = 1 folded into F0) in the Chebyshev moments.
fn to_chebyshev_moments(block: LmiBlock, basis: &DMatrix<f64>) -> LmiBlock {
    let monomial: Vec<&DMatrix<f64>> = std::iter::once(&block.f0).chain(block.fi.iter()).collect();
    let mut out: Vec<DMatrix<f64>> = (0..=MOMENT_COUNT)
        .map(|k| {
            let mut h = DMatrix::zeros(HANKEL_DIM, HANKEL_DIM);
            for (j, g) in monomial.iter().enumerate() {
                let w = basis[(j, k)];
                if w != 0.0 {
                    h += *g * w;
                }
            }
            h
        })
        .collect();
    let f0 = out.remove(0);
    LmiBlock { f0, fi: out }
}

#[derive(Debug, Clone)]
pub struct MomentSolution {
    /// Optimal moments in the normalized variable u ∈ [-1, 1].
    pub moments: MomentVector,
    pub frame: AffineFrame,
    /// Minimizer read off as t₁ before any refinement.
    pub x_extracted: f64,
    pub x_star: f64,
    /// p(x_star)
    pub value: f64,
    /// Optimal value of the relaxation in the units of p.
    pub relaxation_bound: f64,
    /// Set when post-verification failed and the root oracle was used.
    pub fallback: Option<String>,
    pub sdp_iterations: usize,
}

/// Minimizes `p` on `iv` through the moment SDP.
pub fn solve_moment_sdp(p: &Polynomial, iv: Interval, backend: &dyn SdpBackend) -> Result<MomentSolution> {
    if p.degree() > MAX_OBJECTIVE_DEGREE {
        return Err(Error::DegreeOverflow {
            degree: p.degree(),
            limit: MAX_OBJECTIVE_DEGREE,
        });
    }
    let frame = iv.normalizing_frame();
    let q = p.compose_affine(frame.scale, frame.offset);
    if iv.is_degenerate() || q.degree() == 0 {
        let x = iv.lo;
        return Ok(MomentSolution {
            moments: MomentVector::dirac(frame.to_u(x)),
            frame,
            x_extracted: x,
            x_star: x,
            value: p.eval(x),
            relaxation_bound: p.eval(x),
            fallback: None,
            sdp_iterations: 0,
        });
    }

    // Work in Chebyshev moments zₖ = E[Tₖ(u)]: the cost then holds the
    // Chebyshev coefficients of q, whose size tracks the range of q on
    // [-1, 1] instead of the cancelling monomial coefficients.
    let basis = monomials_in_chebyshev();
    let cheb: Vec<f64> = (0..=MOMENT_COUNT)
        .map(|k| (0..=MOMENT_COUNT).map(|j| q.coeff(j) * basis[(j, k)]).sum())
        .collect();
    let scale = cheb[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let cost = DVector::from_fn(MOMENT_COUNT, |i, _| cheb[i + 1] / scale);
    let problem = SdpProblem {
        cost,
        blocks: chebyshev_congruence(localizing_blocks(-1.0, 1.0))
            .into_iter()
            .map(|b| to_chebyshev_moments(b, &basis))
            .collect(),
    };
    let sol = backend.solve(&problem)?;
    if !sol.converged(SDP_TOL) {
        return Err(Error::Sdp(format!(
            "{} stopped with {:?} (violation {:.1e}, residual {:.1e}, gap {:.1e})",
            backend.name(),
            sol.status,
            sol.lmi_violation,
            sol.multiplier_residual,
            sol.rel_gap
        )));
    }

    let z: Vec<f64> = std::iter::once(1.0).chain(sol.y.iter().copied()).collect();
    let moments = MomentVector(
        (0..=MOMENT_COUNT)
            .map(|j| (0..=MOMENT_COUNT).map(|k| basis[(j, k)] * z[k]).sum())
            .collect(),
    );
    let u_raw = moments.first().clamp(-1.0, 1.0);
    let u = refine(&q, u_raw);
    let obj = sol.objective;
    let scaled_value = |u: f64| (q.eval(u) - cheb[0]) / scale;

    let mut fallback = None;
    let mut u_star = u;
    if (scaled_value(u) - obj).abs() > VERIFY_TOL * (1.0 + obj.abs()) {
        let (u_or, _) = minimize_normalized(&q)?;
        fallback = Some(format!(
            "extracted point misses the relaxation value by {:.2e}; root oracle used",
            (scaled_value(u) - obj).abs()
        ));
        u_star = u_or;
    }
    let x_star = iv.clamp(frame.to_x(u_star));
    Ok(MomentSolution {
        moments,
        frame,
        x_extracted: iv.clamp(frame.to_x(u_raw)),
        x_star,
        value: q.eval(u_star),
        relaxation_bound: cheb[0] + scale * obj,
        fallback,
        sdp_iterations: sol.iterations,
    })
}

/// Safeguarded Newton steps on q′ from the extracted point. A step is kept
/// only if it stays in [-1, 1], is small, and does not raise q; a nearby
/// endpoint wins if it is lower.
fn refine(q: &Polynomial, mut u: f64) -> f64 {
    let dq = q.derivative();
    let ddq = dq.derivative();
    for _ in 0..6 {
        let (g, h) = (dq.eval(u), ddq.eval(u));
        if !(h > 0.0) || g == 0.0 {
            break;
        }
        let next = (u - g / h).clamp(-1.0, 1.0);
        if (next - u).abs() > 1e-3 || q.eval(next) > q.eval(u) {
            break;
        }
        u = next;
    }
    // A minimizer on the boundary has q′ ≠ 0, so Newton cannot find it.
    for b in [-1.0, 1.0] {
        if (u - b).abs() <= 1e-3 && q.eval(b) < q.eval(u) {
            u = b;
        }
    }
    u
}
