//! Slow, independent reference computations used to check the fast paths.

use nalgebra::{Matrix2, Matrix3, Matrix3x2};

use crate::dynamics::{meas_noise_vars, observables, MeasNoiseVars, RelativeState};
use crate::ekf::{inv2, jacobian, Prediction};
use crate::pcrb::FisherParams;
use crate::polyopt::Interval;

/// Central differences of the observables.
pub fn finite_difference_jacobian(at: RelativeState, h: f64, lambda: f64, step: f64) -> Matrix3x2<f64> {
    let mut j = Matrix3x2::zeros();
    for k in 0..2 {
        let (mut plus, mut minus) = (at, at);
        if k == 0 {
            plus.x += step;
            minus.x -= step;
        } else {
            plus.v += step;
            minus.v -= step;
        }
        let d = (observables(plus, h, lambda).as_vector() - observables(minus, h, lambda).as_vector()) / (2.0 * step);
        j.set_column(k, &d);
    }
    j
}

/// Textbook gain-form posterior covariance (I − K H) Mp.
pub fn gain_form_covariance(pred: &Prediction, vars: &MeasNoiseVars, h: f64, lambda: f64) -> Matrix2<f64> {
    let hj = jacobian(pred.xbreve, h, lambda);
    let s = Matrix3::from_diagonal(&vars.as_vector()) + hj * pred.mp * hj.transpose();
    let k = pred.mp * hj.transpose() * s.try_inverse().expect("innovation covariance invertible");
    (Matrix2::identity() - k * hj) * pred.mp
}

/// Bayesian information HᵀQm⁻¹H + Mp⁻¹ assembled from the Jacobian.
pub fn fisher_matrix(at: RelativeState, mp: &Matrix2<f64>, fp: &FisherParams) -> Matrix2<f64> {
    let hj = jacobian(at, fp.h, fp.lambda);
    let vars = meas_noise_vars(at, fp.gamma_r, fp.h, fp.a1, fp.a2, fp.a3);
    let qinv = Matrix3::from_diagonal(&vars.as_vector().map(|s| 1.0 / s));
    hj.transpose() * qinv * hj + inv2(mp).expect("prior covariance invertible")
}

/// Dense grid search followed by ternary refinement around the best point.
/// Returns (argmin, min).
pub fn grid_minimize<F: Fn(f64) -> f64>(f: F, iv: Interval, points: usize) -> (f64, f64) {
    let mut best = (iv.lo, f(iv.lo));
    for x in iv.grid(points.max(2)) {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let step = iv.width() / (points.max(2) - 1) as f64;
    let (mut lo, mut hi) = (iv.clamp(best.0 - step), iv.clamp(best.0 + step));
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let x = 0.5 * (lo + hi);
    let v = f(x);
    if v < best.1 {
        (x, v)
    } else {
        best
    }
}
