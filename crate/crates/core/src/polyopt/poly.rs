use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense univariate polynomial; `coeffs[q]` multiplies x^q.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Affine change of variable x = scale·u + offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFrame {
    pub scale: f64,
    pub offset: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Frame mapping u ∈ [-1, 1] onto this interval. A degenerate interval
    /// gets unit scale so the map stays invertible.
    pub fn normalizing_frame(&self) -> AffineFrame {
        let half = 0.5 * self.width();
        AffineFrame {
            scale: if half > 0.0 { half } else { 1.0 },
            offset: self.mid(),
        }
    }

    /// `n` equally spaced points including both ends.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let step = if n > 1 { self.width() / (n - 1) as f64 } else { 0.0 };
        (0..n).map(move |k| if k + 1 == n { self.hi } else { self.lo + step * k as f64 })
    }
}

impl AffineFrame {
    pub const IDENTITY: AffineFrame = AffineFrame {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn to_x(&self, u: f64) -> f64 {
        self.scale * u + self.offset
    }

    pub fn to_u(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn interval_to_u(&self, iv: &Interval) -> Interval {
        let (a, b) = (self.to_u(iv.lo), self.to_u(iv.hi));
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl Polynomial {
    pub const MAX_DEGREE: usize = 32;

    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Numerical(format!("non-finite coefficient {bad}")));
        }
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() - 1 > Self::MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                degree: coeffs.len() - 1,
                limit: Self::MAX_DEGREE,
            });
        }
        Ok(Self { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c]).expect("constant polynomial")
    }

    /// s·x + m
    pub fn linear(s: f64, m: f64) -> Self {
        Self::new(vec![m, s]).expect("linear polynomial")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, q: usize) -> f64 {
        self.coeffs.get(q).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::constant(0.0);
        }
        let d = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(q, c)| q as f64 * c)
            .collect();
        Polynomial::new(d).expect("derivative lowers the degree")
    }

    pub fn multiply(&self, other: &Polynomial) -> Result<Polynomial> {
        let degree = self.degree() + other.degree();
        if degree > Self::MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                degree,
                limit: Self::MAX_DEGREE,
            });
        }
        let mut out = vec![0.0; degree + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn powi(&self, k: u32) -> Result<Polynomial> {
        let mut out = Polynomial::constant(1.0);
        for _ in 0..k {
            out = out.multiply(self)?;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.axpy(-1.0, other)
    }

    /// self + k·other
    pub fn axpy(&self, k: f64, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n).map(|q| self.coeff(q) + k * other.coeff(q)).collect();
        Polynomial::new(out).expect("sum keeps the larger degree")
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * k).collect()).expect("scaled polynomial")
    }

    /// p(s·u + m) as a polynomial in u.
    pub fn compose_affine(&self, s: f64, m: f64) -> Polynomial {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        // Horner with the linear factor (s·u + m).
        for &c in self.coeffs.iter().rev() {
            for q in (0..n).rev() {
                let shifted = if q > 0 { out[q - 1] * s } else { 0.0 };
                out[q] = out[q] * m + shifted;
            }
            out[0] += c;
        }
        Polynomial::new(out).expect("composition keeps the degree")
    }

    /// Complex roots as (re, im) pairs from the companion matrix eigenvalues.
    pub fn roots(&self) -> Result<Vec<(f64, f64)>> {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            return Ok(Vec::new());
        }
        // Leading coefficients below 1e-14 of the largest only push roots
        // out towards infinity; dropping them keeps the companion matrix sane.
        let mut c: Vec<f64> = self.coeffs.clone();
        while c.len() > 1 && c[c.len() - 1].abs() <= 1e-14 * scale {
            c.pop();
        }
        let deg = c.len() - 1;
        match deg {
            0 => Ok(Vec::new()),
            1 => Ok(vec![(-c[0] / c[1], 0.0)]),
            _ => {
                let lead = c[deg];
                let mut comp = DMatrix::<f64>::zeros(deg, deg);
                for i in 1..deg {
                    comp[(i, i - 1)] = 1.0;
                }
                for i in 0..deg {
                    comp[(i, deg - 1)] = -c[i] / lead;
                }
                let schur = nalgebra::linalg::Schur::try_new(comp, f64::EPSILON, 10_000)
                    .ok_or(Error::EigenFailure { degree: deg })?;
                Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
            }
        }
    }
}

const IMAG_TOL: f64 = 1e-8;
const NEAR_REAL_TOL: f64 = 1e-3;
const MERGE_TOL: f64 = 1e-10;

/// Global minimizer of `p` over `iv`: endpoints plus the real critical
/// points, found as companion-matrix eigenvalues of p′ after mapping the
/// interval onto [-1, 1].
pub fn minimize_on_interval(p: &Polynomial, iv: Interval) -> Result<(f64, f64)> {
    if iv.is_degenerate() {
        return Ok((iv.lo, p.eval(iv.lo)));
    }
    let frame = iv.normalizing_frame();
    let q = p.compose_affine(frame.scale, frame.offset);
    let (u, val) = minimize_normalized(&q)?;
    Ok((iv.clamp(frame.to_x(u)), val))
}

/// Minimizer of `q` over u ∈ [-1, 1].
pub(crate) fn minimize_normalized(q: &Polynomial) -> Result<(f64, f64)> {
    let dq = q.derivative();
    let ddq = dq.derivative();
    let mut cands: Vec<f64> = vec![-1.0, 1.0];
    for (re, im) in dq.roots()? {
        // Near-real pairs are evaluated too: a multiple critical point
        // splits into a complex pair far above the acceptance tolerance.
        if im.abs() < IMAG_TOL || (im.abs() < NEAR_REAL_TOL && re.abs() <= 1.0 + NEAR_REAL_TOL) {
            let mut r = re.clamp(-1.0, 1.0);
            if im.abs() < IMAG_TOL {
                r = polish_root(&dq, &ddq, r);
            }
            cands.push(r);
        }
    }
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    let mut best = (cands[0], q.eval(cands[0]));
    for &u in &cands[1..] {
        let v = q.eval(u);
        if v < best.1 {
            best = (u, v);
        }
    }
    Ok(best)
}

/// A few guarded Newton steps on p′ = 0, kept inside [-1, 1].
fn polish_root(dq: &Polynomial, ddq: &Polynomial, mut r: f64) -> f64 {
    for _ in 0..4 {
        let f = dq.eval(r);
        let fp = ddq.eval(r);
        if fp == 0.0 || !fp.is_finite() {
            break;
        }
        let next = (r - f / fp).clamp(-1.0, 1.0);
        if dq.eval(next).abs() >= f.abs() {
            break;
        }
        r = next;
    }
    r
}
