//! Small dense SDP solver for problems of the form
//!
//!   minimize cᵀy  subject to  F0ₖ + Σᵢ yᵢ Fᵢₖ ⪰ 0  for every block k.
//!
//! Primal-dual infeasible interior point method with the HKM search
//! direction and a Mehrotra predictor-corrector step. The multiplier side
//! is max −⟨F0, X⟩ s.t. ⟨Fᵢ, X⟩ = cᵢ, X ⪰ 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One linear matrix inequality F0 + Σ yᵢ Fᵢ ⪰ 0.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub f0: DMatrix<f64>,
    pub fi: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub cost: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Stopped on the iteration cap or a stalled step without meeting tolerances.
    Inaccurate,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub status: SdpStatus,
    /// cᵀy
    pub objective: f64,
    /// −⟨F0, X⟩, a lower bound on the optimum when X is feasible.
    pub bound: f64,
    /// max(0, −λmin(F0 + Σ yᵢFᵢ)) relative to 1 + ‖F0‖.
    pub lmi_violation: f64,
    /// ‖⟨Fᵢ, X⟩ − cᵢ‖ relative to 1 + ‖c‖.
    pub multiplier_residual: f64,
    pub rel_gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn converged(&self, tol: f64) -> bool {
        self.status == SdpStatus::Optimal
            && self.lmi_violation <= tol
            && self.multiplier_residual <= tol
            && self.rel_gap <= tol
    }
}

/// Anything that can solve an [`SdpProblem`].
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution>;
}

#[derive(Debug, Clone)]
pub struct InteriorPointSdp {
    pub max_iter: usize,
    /// Stopping tolerance for residuals and relative gap.
    pub target: f64,
    /// Looser level at which a stalled run still counts as optimal.
    pub accept: f64,
    pub step_fraction: f64,
}

impl Default for InteriorPointSdp {
    fn default() -> Self {
        Self {
            max_iter: 100,
            target: 1e-10,
            accept: 1e-7,
            step_fraction: 0.98,
        }
    }
}

type Blocks = Vec<DMatrix<f64>>;
type Solve = Box<dyn Fn(&DVector<f64>) -> Option<DVector<f64>>>;

fn inner(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &Blocks) -> f64 {
    inner(a, a).sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest α ≤ 1 keeping X + α·dX positive semidefinite (per block).
fn max_step(x: &Blocks, dx: &Blocks) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xk, dk) in x.iter().zip(dx) {
        let l = xk.clone().cholesky()?.l();
        // W = L⁻¹ dX L⁻ᵀ by two triangular solves.
        let half = l.solve_lower_triangular(dk)?;
        let w = sym(l.solve_lower_triangular(&half.transpose())?);
        let lmin = w.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

#[derive(Clone)]
struct Iterate {
    x: Blocks,
    y: DVector<f64>,
    z: Blocks,
}

/// Each block's Fᵢ stacked as rows vec(Fᵢ)ᵀ, so the constraint map and its
/// adjoint are single matrix products.
struct Stacked {
    rows: Vec<DMatrix<f64>>,
    /// Transposes of `rows`, i.e. [F_1 … F_m] side by side.
    cols: Vec<DMatrix<f64>>,
    dims: Vec<usize>,
}

impl Stacked {
    fn new(p: &SdpProblem) -> Self {
        let m = p.cost.len();
        let rows: Vec<DMatrix<f64>> = p
            .blocks
            .iter()
            .map(|b| {
                let d = b.f0.nrows();
                DMatrix::from_fn(m, d * d, |i, e| b.fi[i].as_slice()[e])
            })
            .collect();
        let dims = p.blocks.iter().map(|b| b.f0.nrows()).collect();
        let cols = rows.iter().map(|r| r.transpose()).collect();
        Self { rows, cols, dims }
    }

    /// (⟨Fᵢ, X⟩)ᵢ
    fn op(&self, x: &Blocks) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows[0].nrows());
        for (a, xk) in self.rows.iter().zip(x) {
            out.gemv(1.0, a, &DVector::from_column_slice(xk.as_slice()), 1.0);
        }
        out
    }

    /// Σ yᵢ Fᵢ per block.
    fn adjoint(&self, y: &DVector<f64>) -> Blocks {
        self.cols
            .iter()
            .zip(&self.dims)
            .map(|(at, &d)| DMatrix::from_column_slice(d, d, (at * y).as_slice()))
            .collect()
    }

    /// Schur complement M_ij = Σ_k ⟨F_ik, X_k F_jk Z_k⁻¹⟩. Also returns, per
    /// block, the columns vec(X_k F_ik Z_k⁻¹), reused to assemble dX.
    fn schur(&self, x: &Blocks, zinv: &Blocks) -> (DMatrix<f64>, Blocks) {
        let m = self.rows[0].nrows();
        let mut out = DMatrix::zeros(m, m);
        let mut gs = Vec::with_capacity(self.rows.len());
        for ((((a, at), xk), zk), &d) in self.rows.iter().zip(&self.cols).zip(x).zip(zinv).zip(&self.dims) {
            let fh = DMatrix::from_column_slice(d, m * d, at.as_slice());
            // Z⁻¹Fᵢ side by side, then transposed blockwise into FᵢZ⁻¹.
            let k = zk * fh;
            let kt = DMatrix::from_fn(d, m * d, |r, c| {
                let (i, col) = (c / d, c % d);
                k[(col, i * d + r)]
            });
            let g = DMatrix::from_column_slice(d * d, m, (xk * kt).as_slice());
            out.gemm(1.0, a, &g, 1.0);
            gs.push(g);
        }
        (out, gs)
    }
}

fn slack(p: &SdpProblem, ops: &Stacked, y: &DVector<f64>) -> Blocks {
    ops.adjoint(y)
        .into_iter()
        .zip(&p.blocks)
        .map(|(s, b)| s + &b.f0)
        .collect()
}

impl SdpBackend for InteriorPointSdp {
    fn name(&self) -> &str {
        "interior-point (HKM, predictor-corrector)"
    }

    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution> {
        let m = problem.cost.len();
        if problem.blocks.iter().any(|b| b.fi.len() != m) {
            return Err(Error::Sdp("block/cost dimension mismatch".into()));
        }
        // Equilibrate: Fᵢ ← sᵢFᵢ, cᵢ ← sᵢcᵢ with sᵢ = 1/‖Fᵢ‖, so yᵢ ← yᵢ/sᵢ.
        let row_scale: Vec<f64> = (0..m)
            .map(|i| {
                let norm: f64 = problem
                    .blocks
                    .iter()
                    .map(|b| b.fi[i].norm_squared())
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    1.0 / norm
                } else {
                    1.0
                }
            })
            .collect();
        let scaled = SdpProblem {
            cost: DVector::from_fn(m, |i, _| problem.cost[i] * row_scale[i]),
            blocks: problem
                .blocks
                .iter()
                .map(|b| LmiBlock {
                    f0: b.f0.clone(),
                    fi: b.fi.iter().zip(&row_scale).map(|(f, s)| f * *s).collect(),
                })
                .collect(),
        };
        let p = &scaled;
        let ops = Stacked::new(p);
        let dims: Vec<usize> = p.blocks.iter().map(|b| b.f0.nrows()).collect();
        let n: usize = dims.iter().sum();
        let f0: Blocks = p.blocks.iter().map(|b| b.f0.clone()).collect();
        let norm_c = p.cost.norm();
        let norm_f0 = frob(&f0);

        let xi = 10f64.max((n as f64).sqrt());
        let mut it = Iterate {
            x: dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect(),
            y: DVector::zeros(m),
            z: dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect(),
        };

        let metrics = |it: &Iterate| {
            let rp = &p.cost - ops.op(&it.x);
            let s = slack(p, &ops, &it.y);
            let rd: Blocks = s.iter().zip(&it.z).map(|(a, b)| a - b).collect();
            let pobj = p.cost.dot(&it.y);
            let dobj = -inner(&f0, &it.x);
            let pres = rp.norm() / (1.0 + norm_c);
            let dres = frob(&rd) / (1.0 + norm_f0);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            (rp, rd, pres, dres, gap, pobj, dobj)
        };

        let mut iterations = 0;
        let mut status = SdpStatus::Inaccurate;
        let mut best = (f64::INFINITY, it.clone(), 0);
        let mut progress = 0;
        for k in 0..self.max_iter {
            iterations = k;
            let (rp, rd, pres, dres, gap, _, _) = metrics(&it);
            let score = pres.max(dres).max(gap);
            if score < best.0 {
                if score < 0.5 * best.0 {
                    progress = k;
                }
                best = (score, it.clone(), k);
            }
            // Past the attainable accuracy the iterates only stall or degrade.
            if best.0 <= self.accept && k >= progress + 3 {
                break;
            }
            if pres <= self.target && dres <= self.target && gap <= self.target {
                status = SdpStatus::Optimal;
                break;
            }
            if it.y.amax() > 1e12 {
                status = SdpStatus::Unbounded;
                break;
            }
            if it.x.iter().any(|x| x.amax() > 1e14) {
                status = SdpStatus::Infeasible;
                break;
            }

            let zinv: Blocks = match it.z.iter().map(|z| z.clone().try_inverse()).collect() {
                Some(v) => v,
                None => break,
            };
            let mu = inner(&it.x, &it.z) / n as f64;

            let (schur, gs) = ops.schur(&it.x, &zinv);
            // Jacobi scaling keeps the factorization usable as Z⁻¹ blows up.
            let schur = sym(schur);
            let dscale = schur.diagonal().map(|d| 1.0 / d.abs().max(1e-300).sqrt());
            let scaled = DMatrix::from_fn(m, m, |i, j| schur[(i, j)] * dscale[i] * dscale[j]);
            // Near the optimum rounding can make the Schur matrix look
            // indefinite; a pivoted LU still gives a usable direction.
            let factor: Solve = match scaled.clone().cholesky() {
                Some(c) => Box::new(move |r| Some(c.solve(r))),
                None => {
                    let lu = scaled.full_piv_lu();
                    Box::new(move |r| lu.solve(r))
                }
            };
            let solve_schur = |r: &DVector<f64>| {
                factor(&r.component_mul(&dscale))
                    .map(|v| v.component_mul(&dscale))
                    .unwrap_or_else(|| DVector::zeros(m))
            };

            // Newton system for a given complementarity target R_c, with two
            // rounds of refinement on the assembled ⟨Fᵢ, dX⟩ = r_p.
            let direction = |rc: &Blocks| -> (Blocks, DVector<f64>, Blocks) {
                let w: Blocks = (0..dims.len())
                    .map(|k| (&rc[k] - &it.x[k] * &rd[k]) * &zinv[k])
                    .collect();
                // dX = (R_c − X dZ) Z⁻¹ = W − Σ dyᵢ X Fᵢ Z⁻¹
                let build = |dy: &DVector<f64>| {
                    let dz: Blocks = ops.adjoint(dy).into_iter().zip(&rd).map(|(a, r)| a + r).collect();
                    let dx: Blocks = (0..dims.len())
                        .map(|k| {
                            let d = dims[k];
                            let corr = &gs[k] * dy;
                            sym(&w[k] - DMatrix::from_column_slice(d, d, corr.as_slice()))
                        })
                        .collect();
                    (dx, dz)
                };
                let mut dy = solve_schur(&(ops.op(&w) - &rp));
                let (mut dx, mut dz) = build(&dy);
                for _ in 0..2 {
                    let err = ops.op(&dx) - &rp;
                    dy += solve_schur(&err);
                    (dx, dz) = build(&dy);
                }
                (dx, dy, dz)
            };

            let xz: Blocks = it.x.iter().zip(&it.z).map(|(x, z)| x * z).collect();
            let rc_aff: Blocks = xz.iter().map(|a| -a).collect();
            let (dxa, _, dza) = direction(&rc_aff);
            let (ap, ad) = match (max_step(&it.x, &dxa), max_step(&it.z, &dza)) {
                (Some(a), Some(b)) => (a.min(1.0), b.min(1.0)),
                _ => break,
            };
            let xa: Blocks = it.x.iter().zip(&dxa).map(|(x, d)| x + d * ap).collect();
            let za: Blocks = it.z.iter().zip(&dza).map(|(z, d)| z + d * ad).collect();
            let mu_aff = inner(&xa, &za) / n as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc: Blocks = (0..dims.len())
                .map(|k| DMatrix::identity(dims[k], dims[k]) * (sigma * mu) - &xz[k] - &dxa[k] * &dza[k])
                .collect();
            let (dx, dy, dz) = direction(&rc);
            let (ap, ad) = match (max_step(&it.x, &dx), max_step(&it.z, &dz)) {
                (Some(a), Some(b)) => ((self.step_fraction * a).min(1.0), (self.step_fraction * b).min(1.0)),
                _ => break,
            };
            if ap.max(ad) < 1e-12 {
                break;
            }
            for k in 0..dims.len() {
                it.x[k] += &dx[k] * ap;
                it.z[k] += &dz[k] * ad;
            }
            it.y += &dy * ad;
            iterations = k + 1;
        }

        if status == SdpStatus::Inaccurate && best.0.is_finite() {
            (it, iterations) = (best.1, best.2);
        }
        let (_, _, pres, _, gap, pobj, dobj) = metrics(&it);
        let s = slack(p, &ops, &it.y);
        let lmin = s
            .iter()
            .map(|b| b.clone().symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min);
        let lmi_violation = (-lmin).max(0.0) / (1.0 + norm_f0);
        if status == SdpStatus::Inaccurate && pres <= self.accept && gap <= self.accept && lmi_violation <= self.accept
        {
            status = SdpStatus::Optimal;
        }
        Ok(SdpSolution {
            y: DVector::from_fn(m, |i, _| it.y[i] * row_scale[i]),
            status,
            objective: pobj,
            bound: dobj,
            lmi_violation,
            multiplier_residual: pres,
            rel_gap: gap,
            iterations,
        })
    }
}
