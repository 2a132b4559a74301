//! Extended Kalman filter on the relative state.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};

use crate::dynamics::{observables, transition, MeasNoiseVars, RelativeState};
use crate::error::{Error, Result};

/// Posterior estimate and its MSE matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    pub xhat: RelativeState,
    pub m: Matrix2<f64>,
}

/// Prior for the coming slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub xbreve: RelativeState,
    pub mp: Matrix2<f64>,
}

const DET_GUARD: f64 = 1e-300;
const MAX_INNOVATION_COND: f64 = 1e12;

/// Closed-form inverse of a 2×2 matrix.
pub fn inv2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det.abs() > DET_GUARD) {
        return Err(Error::SingularMatrix { det });
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

pub(crate) fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

pub fn predict(prev: &Belief, u_delta_v: f64, dt: f64, qp: &Matrix2<f64>) -> Prediction {
    let g = transition(dt);
    let x = g * prev.xhat.as_vector();
    Prediction {
        xbreve: RelativeState::new(x[0] - u_delta_v * dt, x[1] - u_delta_v),
        mp: symmetrize(g * prev.m * g.transpose() + qp),
    }
}

/// Jacobian of (phi, d, mu) with respect to (x, v) at the predicted state.
pub fn jacobian(xbreve: RelativeState, h: f64, lambda: f64) -> Matrix3x2<f64> {
    let (x, v) = (xbreve.x, xbreve.v);
    let d2 = h * h + x * x;
    let d = d2.sqrt();
    Matrix3x2::new(
        -h / d2,
        0.0,
        x / d,
        0.0,
        -2.0 * v * h * h / (lambda * d2 * d),
        -2.0 * x / (lambda * d),
    )
}

/// Measurement update. The stored covariance is the information form
/// (HᵀQm⁻¹H + Mp⁻¹)⁻¹.
pub fn update(pred: &Prediction, y: &Vector3<f64>, vars: &MeasNoiseVars, h: f64, lambda: f64) -> Result<Belief> {
    let hj = jacobian(pred.xbreve, h, lambda);
    let qm = Matrix3::from_diagonal(&vars.as_vector());
    let s = qm + hj * pred.mp * hj.transpose();

    // Condition of the Jacobi-scaled innovation covariance; the raw
    // diagonal spans ~10 orders of magnitude by construction.
    let scale = s.diagonal().map(|d| 1.0 / d.sqrt());
    let scaled = Matrix3::from_diagonal(&scale) * s * Matrix3::from_diagonal(&scale);
    let eig = scaled.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < MAX_INNOVATION_COND) {
        return Err(Error::IllConditionedInnovation { cond });
    }
    let s_inv = s.try_inverse().ok_or(Error::IllConditionedInnovation { cond })?;
    let gain = pred.mp * hj.transpose() * s_inv;
    let innovation = y - observables(pred.xbreve, h, lambda).as_vector();
    let xhat = pred.xbreve.as_vector() + gain * innovation;

    let qm_inv = Matrix3::from_diagonal(&vars.as_vector().map(|s| 1.0 / s));
    let info = hj.transpose() * qm_inv * hj + inv2(&pred.mp)?;
    Ok(Belief {
        xhat: RelativeState::from_vector(&xhat),
        m: symmetrize(inv2(&info)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{meas_noise_vars, process_cov};
    use crate::oracles;
    use crate::scenario::Scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rel_err(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
        (a - b).abs().max() / b.abs().max()
    }

    fn random_pd<R: Rng>(rng: &mut R) -> Matrix2<f64> {
        let a = Matrix2::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        a * a.transpose() + Matrix2::identity() * 0.05
    }

    #[test]
    fn zero_uncertainty_propagates_to_process_noise() {
        let qp = process_cov(1.0, 0.2);
        let b = Belief {
            xhat: RelativeState::new(10.0, 2.0),
            m: Matrix2::zeros(),
        };
        let p = predict(&b, 0.0, 0.2, &qp);
        assert_eq!(p.mp, qp);
        assert!((p.xbreve.x - 10.4).abs() < 1e-12 && p.xbreve.v == 2.0);
    }

    #[test]
    fn identity_prior_propagation() {
        let qp = process_cov(1.0, 0.2);
        let b = Belief {
            xhat: RelativeState::new(0.0, 0.0),
            m: Matrix2::identity(),
        };
        let p = predict(&b, 0.0, 0.2, &qp);
        let expected = Matrix2::new(1.04, 0.2, 0.2, 1.0) + qp;
        assert!(rel_err(&p.mp, &expected) < 1e-14);
    }

    #[test]
    fn jacobian_at_boresight() {
        let j = jacobian(RelativeState::new(0.0, 3.0), 50.0, 0.01);
        assert!((j[(0, 0)] + 1.0 / 50.0).abs() < 1e-15);
        assert_eq!(j[(1, 0)], 0.0);
        assert!((j[(2, 0)] + 2.0 * 3.0 / (0.01 * 50.0)).abs() < 1e-9);
        assert_eq!(j.column(1).abs().max(), 0.0);
        let j = jacobian(RelativeState::new(50.0, 0.0), 50.0, 0.01);
        assert!((j[(1, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let at = RelativeState::new(37.0, -4.0);
        let j = jacobian(at, 50.0, 0.01);
        let fd = oracles::finite_difference_jacobian(at, 50.0, 0.01, 1e-4);
        for i in 0..3 {
            for k in 0..2 {
                let (a, b) = (j[(i, k)], fd[(i, k)]);
                if b == 0.0 {
                    assert!(a.abs() < 1e-12);
                } else {
                    assert!((a - b).abs() / b.abs() < 1e-5, "({i},{k}) {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let sc = Scenario::default();
        let pred = Prediction {
            xbreve: RelativeState::new(25.0, 3.0),
            mp: Matrix2::new(2.0, 0.3, 0.3, 1.0),
        };
        let vars = meas_noise_vars(pred.xbreve, sc.derived.gamma_r, 50.0, 0.1, 10.0, 2000.0);
        let y = observables(pred.xbreve, 50.0, 0.01).as_vector();
        let b = update(&pred, &y, &vars, 50.0, 0.01).unwrap();
        assert!((b.xhat.x - 25.0).abs() < 1e-12 && (b.xhat.v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let sc = Scenario::default();
        let pred = Prediction {
            xbreve: RelativeState::new(25.0, 3.0),
            mp: Matrix2::new(2.0, 0.3, 0.3, 1.0),
        };
        let vars = meas_noise_vars(pred.xbreve, sc.derived.gamma_r, 50.0, 0.1, 10.0, 2000.0).scaled(1e12);
        let y = observables(pred.xbreve, 50.0, 0.01).as_vector();
        let b = update(&pred, &y, &vars, 50.0, 0.01).unwrap();
        assert!(rel_err(&b.m, &pred.mp) < 1e-6);
    }

    #[test]
    fn information_form_equals_gain_form() {
        let sc = Scenario::default();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pred = Prediction {
                xbreve: RelativeState::new(30.0, 5.0),
                mp: random_pd(&mut rng),
            };
            let vars = meas_noise_vars(pred.xbreve, sc.derived.gamma_r, 50.0, 0.1, 10.0, 2000.0);
            let y = observables(pred.xbreve, 50.0, 0.01).as_vector();
            let b = update(&pred, &y, &vars, 50.0, 0.01).unwrap();
            let gain_form = oracles::gain_form_covariance(&pred, &vars, 50.0, 0.01);
            assert!(rel_err(&b.m, &gain_form) < 1e-8, "{}", rel_err(&b.m, &gain_form));
        }
    }

    #[test]
    fn update_never_increases_uncertainty() {
        let sc = Scenario::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let xb = RelativeState::new(rng.random_range(-150.0..150.0), rng.random_range(-15.0..15.0));
            let pred = Prediction {
                xbreve: xb,
                mp: random_pd(&mut rng),
            };
            let vars = meas_noise_vars(xb, sc.derived.gamma_r, 50.0, 0.1, 10.0, 2000.0);
            let y = observables(xb, 50.0, 0.01).as_vector();
            let b = update(&pred, &y, &vars, 50.0, 0.01).unwrap();
            let diff = pred.mp - b.m;
            let eig = diff.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-10 * pred.mp.abs().max(), "{eig:?}");
            assert!((b.m[(0, 1)] - b.m[(1, 0)]).abs() <= 1e-12 * b.m.abs().max());
        }
    }

    #[test]
    fn singular_inverse_guarded() {
        assert!(matches!(inv2(&Matrix2::zeros()), Err(Error::SingularMatrix { .. })));
        let inv = inv2(&Matrix2::new(2.0, 1.0, 1.0, 3.0)).unwrap();
        let prod = inv * Matrix2::new(2.0, 1.0, 1.0, 3.0);
        assert!((prod - Matrix2::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn degenerate_noise_rejected() {
        let pred = Prediction {
            xbreve: RelativeState::new(25.0, 3.0),
            mp: Matrix2::new(2.0, 0.3, 0.3, 1.0),
        };
        let vars = MeasNoiseVars {
            s1: 1e-30,
            s2: 1e-30,
            s3: 1e-30,
        };
        let y = observables(pred.xbreve, 50.0, 0.01).as_vector();
        assert!(matches!(
            update(&pred, &y, &vars, 50.0, 0.01),
            Err(Error::IllConditionedInnovation { .. })
        ));
    }
}
