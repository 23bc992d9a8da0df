use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PolyError;

/// Degree limit for the exact interval minimizer.
pub const MAX_MINIMIZE_DEGREE: usize = 16;

/// Roots outside the interval by less than this are still accepted (clamped).
const ROOT_INTERVAL_SLACK: f64 = 1e-10;

/// Eigenvalues whose imaginary part is below this (relative to magnitude) are
/// treated as perturbed real roots. Repeated roots of the derivative split
/// into complex clusters of roughly eps^(1/multiplicity).
const ROOT_IMAG_TOL: f64 = 1e-4;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, PolyError> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(PolyError::NonFinite);
        }
        if lo > hi {
            return Err(PolyError::InvertedInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width.abs(), half_width.abs()).expect("symmetric interval")
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo, self.hi)
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = PolyError;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self, Self::Error> {
        Interval::new(lo, hi)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> Self {
        (i.lo, i.hi)
    }
}

/// Dense univariate polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnivariatePolynomial {
    coeffs: Vec<f64>,
}

impl UnivariatePolynomial {
    /// Trailing exact zeros are trimmed; the zero polynomial has no
    /// coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Real roots via eigenvalues of the companion matrix, each refined by one
    /// Newton step. Near-real complex pairs are reported by their real part.
    /// Leading coefficients that are negligible relative to the rest are
    /// dropped first so the companion matrix stays bounded.
    pub fn real_roots(&self) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        while c.len() > 1 && c.last().is_some_and(|v| v.abs() <= 1e-14 * scale) {
            c.pop();
        }
        let n = c.len().saturating_sub(1);
        let raw: Vec<f64> = match n {
            0 => Vec::new(),
            1 => vec![-c[0] / c[1]],
            2 => quadratic_roots(c[0], c[1], c[2]),
            _ => {
                let lead = c[n];
                let mut m = DMatrix::<f64>::zeros(n, n);
                for i in 1..n {
                    m[(i, i - 1)] = 1.0;
                }
                for i in 0..n {
                    m[(i, n - 1)] = -c[i] / lead;
                }
                m.complex_eigenvalues()
                    .iter()
                    .filter(|z| z.im.abs() <= ROOT_IMAG_TOL * (1.0 + z.norm()))
                    .map(|z| z.re)
                    .collect()
            }
        };
        let poly = UnivariatePolynomial::new(c);
        let deriv = poly.derivative();
        raw.into_iter()
            .filter(|r| r.is_finite())
            .map(|r| newton_polish(&poly, &deriv, r))
            .collect()
    }
}

fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        // Complex pair; keep the real part when the pair is nearly real.
        let re = -c1 / (2.0 * c2);
        let im = (-disc).sqrt() / (2.0 * c2.abs());
        return if im <= ROOT_IMAG_TOL * (1.0 + re.abs()) {
            vec![re]
        } else {
            Vec::new()
        };
    }
    // Numerically stable pairing of the two roots.
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / c2, c0 / q]
}

fn newton_polish(p: &UnivariatePolynomial, dp: &UnivariatePolynomial, r: f64) -> f64 {
    let f = p.eval(r);
    let d = dp.eval(r);
    if d == 0.0 || !d.is_finite() {
        return r;
    }
    let next = r - f / d;
    if next.is_finite() && p.eval(next).abs() <= f.abs() {
        next
    } else {
        r
    }
}

/// Global minimizer of `q` over the closed interval.
///
/// Candidates are the endpoints and the real roots of `q'` inside the interval.
/// Values that agree to within a few ulps count as ties and resolve to the
/// smallest argument.
pub fn univariate_min_on_interval(
    q: &UnivariatePolynomial,
    interval: Interval,
) -> Result<(f64, f64), PolyError> {
    if q.degree() > MAX_MINIMIZE_DEGREE {
        return Err(PolyError::DegreeTooHigh {
            degree: q.degree(),
            limit: MAX_MINIMIZE_DEGREE,
        });
    }
    let (lo, hi) = (interval.lo(), interval.hi());
    if q.is_constant() {
        return Ok((lo, q.eval(lo)));
    }
    let mut candidates = vec![lo, hi];
    if hi > lo {
        let dq = q.derivative();
        for r in dq.real_roots() {
            if r >= lo - ROOT_INTERVAL_SLACK && r <= hi + ROOT_INTERVAL_SLACK {
                candidates.push(r.clamp(lo, hi));
            }
        }
    }
    let scored: Vec<(f64, f64)> = candidates.into_iter().map(|t| (t, q.eval(t))).collect();
    let best = scored
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    let tie = 8.0 * f64::EPSILON * best.abs().max(horner_scale(q, lo, hi));
    let (arg, value) = scored
        .into_iter()
        .filter(|&(_, v)| v <= best + tie)
        .fold((f64::INFINITY, f64::INFINITY), |(a, av), (t, v)| {
            if t < a {
                (t, v)
            } else {
                (a, av)
            }
        });
    Ok((arg, value))
}

// Sum of monomial magnitudes at the widest point; bounds Horner round-off.
fn horner_scale(q: &UnivariatePolynomial, lo: f64, hi: f64) -> f64 {
    let r = lo.abs().max(hi.abs());
    q.coefficients()
        .iter()
        .enumerate()
        .map(|(i, c)| c.abs() * r.powi(i as i32))
        .sum()
}

impl Add for &UnivariatePolynomial {
    type Output = UnivariatePolynomial;

    fn add(self, rhs: &UnivariatePolynomial) -> UnivariatePolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        UnivariatePolynomial::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + rhs.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Sub for &UnivariatePolynomial {
    type Output = UnivariatePolynomial;

    fn sub(self, rhs: &UnivariatePolynomial) -> UnivariatePolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        UnivariatePolynomial::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) - rhs.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Mul for &UnivariatePolynomial {
    type Output = UnivariatePolynomial;

    fn mul(self, rhs: &UnivariatePolynomial) -> UnivariatePolynomial {
        if self.is_zero() || rhs.is_zero() {
            return UnivariatePolynomial::default();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UnivariatePolynomial::new(out)
    }
}
