//! Target/platform kinematics and measurement synthesis.
//!
//! Everything is expressed in the relative frame: `x` is target position
//! minus platform position along the flight line, `v` the relative velocity.
//! The platform flies at constant altitude `h` above the target's track.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative target kinematics (target minus platform).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState {
    pub x: f64,
    pub v: f64,
}

impl RelativeState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.v)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { x: v[0], v: v[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavMotion {
    pub pos: f64,
    pub vel: f64,
}

/// Elevation angle, distance and Doppler shift of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub phi: f64,
    pub d: f64,
    pub mu: f64,
}

impl Observables {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.phi, self.d, self.mu)
    }
}

/// Measurement noise variances for (phi, d, mu).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasNoiseVars {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl MeasNoiseVars {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.s1, self.s2, self.s3)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            s1: self.s1 * k,
            s2: self.s2 * k,
            s3: self.s3 * k,
        }
    }
}

/// Constant-velocity transition matrix.
pub fn transition(dt: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, dt, 0.0, 1.0)
}

/// Process noise covariance of the constant-velocity model.
pub fn process_cov(q_tilde: f64, dt: f64) -> Matrix2<f64> {
    let dt2 = dt * dt;
    Matrix2::new(dt2 * dt / 3.0, dt2 / 2.0, dt2 / 2.0, dt) * q_tilde
}

/// Draws one process-noise sample from N(0, Q_p) through its Cholesky factor.
pub fn sample_process_noise<R: Rng + ?Sized>(qp: &Matrix2<f64>, rng: &mut R) -> Vector2<f64> {
    let l = qp.cholesky().expect("process covariance is positive definite").l();
    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    l * z
}

/// Advances the relative state one slot. `u_delta_v` is the platform
/// velocity change applied at the start of the slot.
pub fn evolve_relative(prev: RelativeState, u_delta_v: f64, dt: f64, noise: Vector2<f64>) -> RelativeState {
    RelativeState {
        x: prev.x + dt * prev.v - u_delta_v * dt + noise[0],
        v: prev.v - u_delta_v + noise[1],
    }
}

pub fn observables(rel: RelativeState, h: f64, lambda: f64) -> Observables {
    let d = h.hypot(rel.x);
    Observables {
        phi: h.atan2(rel.x),
        d,
        mu: -2.0 * rel.v * rel.x / (lambda * d),
    }
}

/// Noise variances at the given geometry. The effective SNR falls off as
/// d⁻⁴ (round-trip path loss), which is the convention under which the
/// closed-form Fisher terms in [`crate::pcrb`] are the exact information.
pub fn meas_noise_vars(rel: RelativeState, gamma_r: f64, h: f64, a1: f64, a2: f64, a3: f64) -> MeasNoiseVars {
    let d2 = h * h + rel.x * rel.x;
    let d4 = d2 * d2;
    let sin2 = h * h / d2;
    MeasNoiseVars {
        s1: a1 * a1 * d4 / (gamma_r * sin2),
        s2: a2 * a2 * d4 / gamma_r,
        s3: a3 * a3 * d4 / gamma_r,
    }
}

/// y = h(rel) + z with z ~ N(0, diag(vars)).
pub fn synth_measurement<R: Rng + ?Sized>(
    rel: RelativeState,
    h: f64,
    lambda: f64,
    vars: &MeasNoiseVars,
    rng: &mut R,
) -> Vector3<f64> {
    let z = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    observables(rel, h, lambda).as_vector() + z.component_mul(&vars.as_vector().map(f64::sqrt))
}
