//! Predicted Cramér-Rao bounds for the next slot and the ratio-of-polynomials
//! form of the weighted objective.
//!
//! With d² = H² + x² the Bayesian information at the predicted state is
//!
//!   F_x   = H⁴γ/(a₁²d¹⁰) + γx²/(a₂²d⁶) + 4H⁴γv²/(a₃²λ²d¹⁰) + r₁₁
//!   F_v   = 4γx²/(a₃²λ²d⁶) + r₂₂
//!   cross = r₁₂ + 4H²γ·v·x/(a₃²λ²d⁸)
//!
//! where r = Mp⁻¹ and γ = γ_r.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::RelativeState;
use crate::ekf::inv2;
use crate::error::{Error, Result};
use crate::polyopt::{AffineFrame, Polynomial};
use crate::scenario::Scenario;

/// Which diagonal entry of the inverse information each bound reads.
///
/// `MatrixConsistent` takes the (1,1) and (2,2) entries of J⁻¹, so the
/// position bound is F_v/D. `SwappedNumerators` swaps the two numerators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcrbConvention {
    #[default]
    MatrixConsistent,
    SwappedNumerators,
}

/// Geometry and sensing constants entering the information terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherParams {
    pub gamma_r: f64,
    pub h: f64,
    pub lambda: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl FisherParams {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            gamma_r: sc.derived.gamma_r,
            h: sc.system.h,
            lambda: sc.system.lambda,
            a1: sc.system.a1,
            a2: sc.system.a2,
            a3: sc.system.a3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherTerms {
    pub fx: f64,
    pub fv: f64,
    pub cross12: f64,
    pub cross21: f64,
    /// F_x·F_v − cross12·cross21
    pub d: f64,
    pub prior_info: Matrix2<f64>,
}

impl FisherTerms {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.fx, self.cross12, self.cross21, self.fv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcrbPair {
    pub pcrb_x: f64,
    pub pcrb_v: f64,
}

/// Information terms at the predicted state. `mp` is the predicted MSE matrix.
pub fn fisher_terms(xbreve: RelativeState, mp: &Matrix2<f64>, fp: &FisherParams) -> Result<FisherTerms> {
    let r = inv2(mp)?;
    let (x, v) = (xbreve.x, xbreve.v);
    let FisherParams {
        gamma_r: g,
        h,
        lambda,
        a1,
        a2,
        a3,
    } = *fp;
    let d2 = h * h + x * x;
    let d6 = d2 * d2 * d2;
    let d8 = d6 * d2;
    let d10 = d8 * d2;
    let h4 = h.powi(4);
    let doppler = 4.0 * g / (a3 * a3 * lambda * lambda);
    let fx = h4 * g / (a1 * a1 * d10) + g * x * x / (a2 * a2 * d6) + doppler * h4 * v * v / d10 + r[(0, 0)];
    let fv = doppler * x * x / d6 + r[(1, 1)];
    let coupling = doppler * h * h * v * x / d8;
    let cross12 = r[(0, 1)] + coupling;
    let cross21 = r[(1, 0)] + coupling;
    Ok(FisherTerms {
        fx,
        fv,
        cross12,
        cross21,
        d: fx * fv - cross12 * cross21,
        prior_info: r,
    })
}

pub fn predicted_pcrb(ft: &FisherTerms, conv: PcrbConvention) -> Result<PcrbPair> {
    if !(ft.d > 0.0) || !ft.d.is_finite() {
        return Err(Error::Numerical(format!(
            "information determinant {} not positive",
            ft.d
        )));
    }
    let (num_x, num_v) = match conv {
        PcrbConvention::MatrixConsistent => (ft.fv, ft.fx),
        PcrbConvention::SwappedNumerators => (ft.fx, ft.fv),
    };
    Ok(PcrbPair {
        pcrb_x: num_x / ft.d,
        pcrb_v: num_v / ft.d,
    })
}

pub fn weighted_objective(p: &PcrbPair, alpha: f64) -> f64 {
    alpha * p.pcrb_x + (1.0 - alpha) * p.pcrb_v
}

/// Objective = b(u)/a(u) with x̆ = frame.to_x(u).
///
/// Both polynomials are the closed-form numerator and determinant multiplied
/// by ρ⁸, ρ = d²/H², which clears every denominator. Working in ρ instead of
/// d² keeps the coefficients O(1)-ish; relative to multiplying by d¹⁶ both
/// carry the common factor H⁻¹⁶, which cancels in the ratio.
#[derive(Debug, Clone)]
pub struct RatioPolys {
    pub a: Polynomial,
    pub b: Polynomial,
    pub frame: AffineFrame,
}

impl RatioPolys {
    pub fn ratio_at(&self, x: f64) -> f64 {
        let u = self.frame.to_u(x);
        self.b.eval(u) / self.a.eval(u)
    }
}

/// Builds the ratio polynomials for the slot whose previous estimate is
/// `xhat_prev`. The predicted relative velocity follows from the chosen
/// position as v̆ = (x̆ − x̂)/Δt.
pub fn build_ratio_polys(
    xhat_prev: f64,
    dt: f64,
    mp: &Matrix2<f64>,
    fp: &FisherParams,
    alpha: f64,
    conv: PcrbConvention,
    frame: AffineFrame,
) -> Result<RatioPolys> {
    let r = inv2(mp)?;
    let FisherParams {
        gamma_r: g,
        h,
        lambda,
        a1,
        a2,
        a3,
    } = *fp;
    let (s, o) = (frame.scale, frame.offset);
    let xn = Polynomial::linear(s / h, o / h); // x/H
    let xn2 = xn.multiply(&xn)?;
    let rho = xn2.add(&Polynomial::constant(1.0));
    let vel = Polynomial::linear(s / dt, (o - xhat_prev) / dt);
    let rho3 = rho.powi(3)?;
    let rho4 = rho3.multiply(&rho)?;
    let rho5 = rho4.multiply(&rho)?;
    let h4 = h.powi(4);
    let h6 = h4 * h * h;
    let doppler = 4.0 * g / (a3 * a3 * lambda * lambda);

    // F_x·ρ⁵
    let p1 = Polynomial::constant(g / (a1 * a1 * h6))
        .add(&xn2.multiply(&rho.multiply(&rho)?)?.scale(g / (a2 * a2 * h4)))
        .add(&vel.multiply(&vel)?.scale(doppler / h6))
        .add(&rho5.scale(r[(0, 0)]));
    // F_v·ρ³
    let p2 = xn2.scale(doppler / h4).add(&rho3.scale(r[(1, 1)]));
    // cross·ρ⁴
    let coupling = vel.multiply(&xn)?.scale(doppler / (h4 * h));
    let p3 = rho4.scale(r[(0, 1)]).add(&coupling);
    let p3t = rho4.scale(r[(1, 0)]).add(&coupling);

    let a = p1.multiply(&p2)?.sub(&p3.multiply(&p3t)?);
    let num_x = p2.multiply(&rho5)?; // F_v·ρ⁸
    let num_v = p1.multiply(&rho3)?; // F_x·ρ⁸
    let b = match conv {
        PcrbConvention::MatrixConsistent => num_x.scale(alpha).add(&num_v.scale(1.0 - alpha)),
        PcrbConvention::SwappedNumerators => num_v.scale(alpha).add(&num_x.scale(1.0 - alpha)),
    };
    Ok(RatioPolys { a, b, frame })
}
