//! Scenario configuration.
//!
//! A scenario is read from a flat TOML document with one key per parameter
//! in SI units. Every key is optional; missing keys take the reference
//! values listed in [`Scenario::default`]. Unknown keys are rejected.
//!
//! Transmit power and receiver noise may be given either in watts
//! (`pa_w`, `sigma2_w`) or in dBm (`pa_dbm`, `sigma2_dbm`), never both.
//! The stored model is always in watts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::PropulsionParams;
use crate::error::{Error, Result};
use crate::pcrb::PcrbConvention;

/// Physical constants of the platform, radar and noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Blade profile power in hover (W).
    pub p0: f64,
    /// Induced power in hover (W).
    pub p_i: f64,
    /// Rotor blade tip speed (m/s).
    pub u_tip: f64,
    /// Mean rotor induced velocity in hover (m/s).
    pub v_h: f64,
    /// Parasite drag constant (kg·m²).
    pub chi: f64,
    /// Transmit power (W).
    pub pa: f64,
    /// Matched filtering gain.
    pub n_sym: f64,
    /// Carrier wavelength (m).
    pub lambda: f64,
    /// Receiver noise power (W).
    pub sigma2: f64,
    pub nt: u32,
    pub nr: u32,
    /// Radar cross section (m²).
    pub eps_rcs: f64,
    /// Angle, range and Doppler noise scale constants.
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Flight altitude (m).
    pub h: f64,
    /// Process noise intensity.
    pub q_tilde: f64,
}

/// Mission endpoints, horizon, budget and objective weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionParams {
    pub x_i: f64,
    pub x_f: f64,
    /// Number of slots N.
    pub n_slots: usize,
    /// Slot length (s).
    pub dt: f64,
    /// Total propulsion energy budget (J).
    pub e_tot: f64,
    pub v_max: f64,
    /// Weight of the position bound in the objective.
    pub alpha: f64,
    /// Mean target velocity (m/s).
    pub v_t0: f64,
    /// Initial target position (m); the platform starts at `x_i` at rest.
    pub x_t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorInit {
    /// Diagonal of the initial MSE matrix (m², (m/s)²).
    pub m0_diag: [f64; 2],
    /// Standard deviation of the initial estimate error (m, m/s).
    pub init_perturb_std: [f64; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Channel gain constant λ²ε/(64π³) (m⁴).
    pub beta_r: f64,
    /// Composite sensing SNR constant (m⁴).
    pub gamma_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub system: SystemParams,
    pub mission: MissionParams,
    pub init: EstimatorInit,
    pub derived: DerivedConstants,
    pub convention: PcrbConvention,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn derive_constants(sys: &SystemParams) -> DerivedConstants {
    let beta_r = sys.lambda * sys.lambda * sys.eps_rcs / (64.0 * PI.powi(3));
    let gamma_r = f64::from(sys.nt) * f64::from(sys.nr) * sys.pa * sys.n_sym * beta_r / sys.sigma2;
    DerivedConstants { beta_r, gamma_r }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            p0: 79.8563,
            p_i: 88.6279,
            u_tip: 120.0,
            v_h: 4.03,
            chi: 0.0185,
            pa: dbm_to_watts(20.0),
            n_sym: 1e4,
            lambda: 0.01,
            sigma2: dbm_to_watts(-80.0),
            nt: 16,
            nr: 16,
            eps_rcs: 100.0,
            a1: 0.1,
            a2: 10.0,
            a3: 2000.0,
            h: 50.0,
            q_tilde: 1.0,
        }
    }
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            x_i: 0.0,
            x_f: 60.0,
            n_slots: 55,
            dt: 0.2,
            e_tot: 1800.0,
            v_max: 30.0,
            alpha: 0.5,
            v_t0: 10.0,
            x_t0: 50.0,
        }
    }
}

impl Default for EstimatorInit {
    fn default() -> Self {
        Self {
            m0_diag: [1.0, 1.0],
            init_perturb_std: [1.0, 1.0],
            seed: 1,
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        let system = SystemParams::default();
        Self {
            derived: derive_constants(&system),
            system,
            mission: MissionParams::default(),
            init: EstimatorInit::default(),
            convention: PcrbConvention::default(),
        }
    }
}

impl SystemParams {
    pub fn propulsion(&self) -> PropulsionParams {
        PropulsionParams {
            p0: self.p0,
            p_i: self.p_i,
            u_tip: self.u_tip,
            v_h: self.v_h,
            chi: self.chi,
        }
    }
}

impl MissionParams {
    /// Horizontal distance covered in one slot at full speed.
    pub fn step_reach(&self) -> f64 {
        self.v_max * self.dt
    }
}

/// On-disk layout; every key optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    p0: Option<f64>,
    p_i: Option<f64>,
    u_tip: Option<f64>,
    v_h: Option<f64>,
    chi: Option<f64>,
    pa_w: Option<f64>,
    pa_dbm: Option<f64>,
    n_sym: Option<f64>,
    lambda: Option<f64>,
    sigma2_w: Option<f64>,
    sigma2_dbm: Option<f64>,
    nt: Option<i64>,
    nr: Option<i64>,
    eps_rcs: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    a3: Option<f64>,
    h: Option<f64>,
    q_tilde: Option<f64>,
    x_i: Option<f64>,
    x_f: Option<f64>,
    n_slots: Option<i64>,
    dt: Option<f64>,
    e_tot: Option<f64>,
    v_max: Option<f64>,
    alpha: Option<f64>,
    v_t0: Option<f64>,
    x_t0: Option<f64>,
    m0_pos: Option<f64>,
    m0_vel: Option<f64>,
    init_perturb_pos: Option<f64>,
    init_perturb_vel: Option<f64>,
    seed: Option<i64>,
    pcrb_convention: Option<PcrbConvention>,
}

fn exclusive(watts: Option<f64>, dbm: Option<f64>, key: &'static str, default: f64) -> Result<f64> {
    match (watts, dbm) {
        (Some(_), Some(_)) => Err(Error::InvalidParam {
            key,
            reason: "given both in watts and in dBm".into(),
        }),
        (Some(w), None) => Ok(w),
        (None, Some(d)) => Ok(dbm_to_watts(d)),
        (None, None) => Ok(default),
    }
}

fn count(v: Option<i64>, key: &'static str, default: i64) -> Result<i64> {
    let v = v.unwrap_or(default);
    if v < 1 {
        return Err(Error::InvalidParam {
            key,
            reason: format!("must be a positive integer, got {v}"),
        });
    }
    Ok(v)
}

pub fn load_scenario(text: &str) -> Result<Scenario> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let s0 = SystemParams::default();
    let m0 = MissionParams::default();
    let i0 = EstimatorInit::default();

    let system = SystemParams {
        p0: doc.p0.unwrap_or(s0.p0),
        p_i: doc.p_i.unwrap_or(s0.p_i),
        u_tip: doc.u_tip.unwrap_or(s0.u_tip),
        v_h: doc.v_h.unwrap_or(s0.v_h),
        chi: doc.chi.unwrap_or(s0.chi),
        pa: exclusive(doc.pa_w, doc.pa_dbm, "pa", s0.pa)?,
        n_sym: doc.n_sym.unwrap_or(s0.n_sym),
        lambda: doc.lambda.unwrap_or(s0.lambda),
        sigma2: exclusive(doc.sigma2_w, doc.sigma2_dbm, "sigma2", s0.sigma2)?,
        nt: u32::try_from(count(doc.nt, "nt", i64::from(s0.nt))?).map_err(|_| Error::InvalidParam {
            key: "nt",
            reason: "too large".into(),
        })?,
        nr: u32::try_from(count(doc.nr, "nr", i64::from(s0.nr))?).map_err(|_| Error::InvalidParam {
            key: "nr",
            reason: "too large".into(),
        })?,
        eps_rcs: doc.eps_rcs.unwrap_or(s0.eps_rcs),
        a1: doc.a1.unwrap_or(s0.a1),
        a2: doc.a2.unwrap_or(s0.a2),
        a3: doc.a3.unwrap_or(s0.a3),
        h: doc.h.unwrap_or(s0.h),
        q_tilde: doc.q_tilde.unwrap_or(s0.q_tilde),
    };
    let mission = MissionParams {
        x_i: doc.x_i.unwrap_or(m0.x_i),
        x_f: doc.x_f.unwrap_or(m0.x_f),
        n_slots: count(doc.n_slots, "n_slots", m0.n_slots as i64)? as usize,
        dt: doc.dt.unwrap_or(m0.dt),
        e_tot: doc.e_tot.unwrap_or(m0.e_tot),
        v_max: doc.v_max.unwrap_or(m0.v_max),
        alpha: doc.alpha.unwrap_or(m0.alpha),
        v_t0: doc.v_t0.unwrap_or(m0.v_t0),
        x_t0: doc.x_t0.unwrap_or(m0.x_t0),
    };
    let seed = doc.seed.unwrap_or(i0.seed as i64);
    if seed < 0 {
        return Err(Error::InvalidParam {
            key: "seed",
            reason: "must be non-negative".into(),
        });
    }
    let init = EstimatorInit {
        m0_diag: [doc.m0_pos.unwrap_or(i0.m0_diag[0]), doc.m0_vel.unwrap_or(i0.m0_diag[1])],
        init_perturb_std: [
            doc.init_perturb_pos.unwrap_or(i0.init_perturb_std[0]),
            doc.init_perturb_vel.unwrap_or(i0.init_perturb_std[1]),
        ],
        seed: seed as u64,
    };
    Scenario::new(system, mission, init, doc.pcrb_convention.unwrap_or_default())
}

fn positive(key: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            key,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

fn finite(key: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            key,
            reason: format!("must be finite, got {v}"),
        })
    }
}

impl Scenario {
    /// Validates the parts and fills in the derived constants.
    pub fn new(
        system: SystemParams,
        mission: MissionParams,
        init: EstimatorInit,
        convention: PcrbConvention,
    ) -> Result<Self> {
        let s = &system;
        for (k, v) in [
            ("p0", s.p0),
            ("p_i", s.p_i),
            ("u_tip", s.u_tip),
            ("v_h", s.v_h),
            ("chi", s.chi),
            ("pa", s.pa),
            ("n_sym", s.n_sym),
            ("lambda", s.lambda),
            ("sigma2", s.sigma2),
            ("eps_rcs", s.eps_rcs),
            ("a1", s.a1),
            ("a2", s.a2),
            ("a3", s.a3),
            ("h", s.h),
            ("q_tilde", s.q_tilde),
        ] {
            positive(k, v)?;
        }
        if s.nt == 0 || s.nr == 0 {
            return Err(Error::InvalidParam {
                key: "nt/nr",
                reason: "antenna counts must be >= 1".into(),
            });
        }

        let m = &mission;
        for (k, v) in [("x_i", m.x_i), ("x_f", m.x_f), ("v_t0", m.v_t0), ("x_t0", m.x_t0)] {
            finite(k, v)?;
        }
        positive("dt", m.dt)?;
        positive("e_tot", m.e_tot)?;
        positive("v_max", m.v_max)?;
        if m.n_slots < 2 {
            return Err(Error::InvalidParam {
                key: "n_slots",
                reason: format!("need at least 2 slots, got {}", m.n_slots),
            });
        }
        if !(0.0..=1.0).contains(&m.alpha) {
            return Err(Error::InvalidParam {
                key: "alpha",
                reason: format!("alpha out of range [0, 1]: {}", m.alpha),
            });
        }
        let reach = m.n_slots as f64 * m.v_max * m.dt;
        if (m.x_f - m.x_i).abs() > reach {
            return Err(Error::InvalidParam {
                key: "x_f",
                reason: format!(
                    "final location {} m away but at most {reach} m reachable",
                    (m.x_f - m.x_i).abs()
                ),
            });
        }

        positive("m0_pos", init.m0_diag[0])?;
        positive("m0_vel", init.m0_diag[1])?;
        for (k, v) in [
            ("init_perturb_pos", init.init_perturb_std[0]),
            ("init_perturb_vel", init.init_perturb_std[1]),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam {
                    key: k,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if init.seed > i64::MAX as u64 {
            return Err(Error::InvalidParam {
                key: "seed",
                reason: "must fit in a signed 64-bit integer".into(),
            });
        }

        Ok(Self {
            derived: derive_constants(&system),
            system,
            mission,
            init,
            convention,
        })
    }

    /// Writes every key in watts form; `load_scenario` reads it back exactly.
    pub fn to_config_string(&self) -> String {
        let s = &self.system;
        let m = &self.mission;
        let doc = ConfigDoc {
            p0: Some(s.p0),
            p_i: Some(s.p_i),
            u_tip: Some(s.u_tip),
            v_h: Some(s.v_h),
            chi: Some(s.chi),
            pa_w: Some(s.pa),
            pa_dbm: None,
            n_sym: Some(s.n_sym),
            lambda: Some(s.lambda),
            sigma2_w: Some(s.sigma2),
            sigma2_dbm: None,
            nt: Some(i64::from(s.nt)),
            nr: Some(i64::from(s.nr)),
            eps_rcs: Some(s.eps_rcs),
            a1: Some(s.a1),
            a2: Some(s.a2),
            a3: Some(s.a3),
            h: Some(s.h),
            q_tilde: Some(s.q_tilde),
            x_i: Some(m.x_i),
            x_f: Some(m.x_f),
            n_slots: Some(m.n_slots as i64),
            dt: Some(m.dt),
            e_tot: Some(m.e_tot),
            v_max: Some(m.v_max),
            alpha: Some(m.alpha),
            v_t0: Some(m.v_t0),
            x_t0: Some(m.x_t0),
            m0_pos: Some(self.init.m0_diag[0]),
            m0_vel: Some(self.init.m0_diag[1]),
            init_perturb_pos: Some(self.init.init_perturb_std[0]),
            init_perturb_vel: Some(self.init.init_perturb_std[1]),
            seed: Some(self.init.seed as i64),
            pcrb_convention: Some(self.convention),
        };
        toml::to_string(&doc).expect("flat scalar document always serializes")
    }

    pub fn with_budget(mut self, e_tot: f64) -> Result<Self> {
        self.mission.e_tot = e_tot;
        Scenario::new(self.system, self.mission, self.init, self.convention)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn empty_document_gives_reference_values() {
        let sc = load_scenario("").unwrap();
        let s = sc.system;
        assert_eq!(s.p0, 79.8563);
        assert_eq!(s.p_i, 88.6279);
        assert_eq!(s.u_tip, 120.0);
        assert_eq!(s.v_h, 4.03);
        assert_eq!(s.chi, 0.0185);
        assert!(rel(s.pa, 0.1) < 1e-12);
        assert!(rel(s.sigma2, 1e-11) < 1e-12);
        assert_eq!((s.nt, s.nr), (16, 16));
        assert_eq!((s.a1, s.a2, s.a3), (0.1, 10.0, 2000.0));
        assert_eq!(
            (s.q_tilde, s.eps_rcs, s.n_sym, s.lambda, s.h),
            (1.0, 100.0, 1e4, 0.01, 50.0)
        );
        let m = sc.mission;
        assert_eq!(
            (m.dt, m.alpha, m.x_i, m.x_f, m.e_tot, m.v_t0),
            (0.2, 0.5, 0.0, 60.0, 1800.0, 10.0)
        );
        assert_eq!(m.v_max, 30.0);
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let err = load_scenario("alpha = 1.5").unwrap_err();
        assert!(err.to_string().contains("alpha out of range"), "{err}");
    }

    #[test]
    fn long_horizon_reachable() {
        let sc = load_scenario("n_slots = 100\nv_max = 30.0\nx_i = 0.0\nx_f = 60.0").unwrap();
        assert_eq!(sc.mission.n_slots, 100);
    }

    #[test]
    fn unreachable_rejected_with_key() {
        let err = load_scenario("n_slots = 2\nv_max = 1.0\nx_f = 60.0").unwrap_err();
        assert!(matches!(err, Error::InvalidParam { key: "x_f", .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(load_scenario("bogus = 1"), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn dbm_keys_convert_and_conflict() {
        let sc = load_scenario("pa_dbm = 30.0\nsigma2_dbm = -70.0").unwrap();
        assert!(rel(sc.system.pa, 1.0) < 1e-12);
        assert!(rel(sc.system.sigma2, 1e-10) < 1e-12);
        assert!(load_scenario("pa_dbm = 30.0\npa_w = 1.0").is_err());
    }

    #[test]
    fn nonpositive_rejected() {
        for doc in [
            "dt = 0.0",
            "e_tot = -1.0",
            "nt = 0",
            "h = -5.0",
            "m0_pos = 0.0",
            "n_slots = 1",
        ] {
            assert!(load_scenario(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn derived_constants_reference_values() {
        let d = derive_constants(&SystemParams::default());
        assert!(rel(d.beta_r, 5.0393e-6) < 1e-4, "{}", d.beta_r);
        assert!(rel(d.gamma_r, 1.290e11) < 1e-3, "{}", d.gamma_r);
        let s = SystemParams::default();
        let direct = 256.0 * s.pa * s.n_sym * d.beta_r / s.sigma2;
        assert!(rel(d.gamma_r, direct) < 1e-12);
    }

    #[test]
    fn gamma_is_homogeneous() {
        let base = SystemParams::default();
        let g0 = derive_constants(&base).gamma_r;
        let mut s = base;
        s.eps_rcs *= 2.0;
        assert!(rel(derive_constants(&s).gamma_r, 2.0 * g0) < 1e-12);
        let mut s = base;
        s.nt *= 3;
        assert!(rel(derive_constants(&s).gamma_r, 3.0 * g0) < 1e-12);
        let mut s = base;
        s.sigma2 *= 4.0;
        assert!(rel(derive_constants(&s).gamma_r, g0 / 4.0) < 1e-12);
        let mut s = base;
        s.pa *= 5.0;
        s.n_sym *= 2.0;
        s.nr *= 2;
        assert!(rel(derive_constants(&s).gamma_r, 20.0 * g0) < 1e-12);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut sc = Scenario::default();
        sc.system.chi = 0.1 + 0.2;
        sc.mission.e_tot = 1234.5678901234567;
        sc.init.seed = 987654321;
        sc.convention = PcrbConvention::SwappedNumerators;
        let text = sc.to_config_string();
        let back = load_scenario(&text).unwrap();
        assert_eq!(back, sc);
    }
}
