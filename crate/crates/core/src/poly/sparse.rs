use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::basis::grlex_cmp;
use super::univariate::UnivariatePolynomial;
use super::PolyError;

/// Relative magnitude below which a coefficient is dropped on
/// canonicalization.
pub const PRUNE_RELATIVE: f64 = 1e-14;

/// One term `coefficient * prod(x_k ^ exponents[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(rename = "e")]
    pub exponents: Vec<u32>,
    #[serde(rename = "c")]
    pub coefficient: f64,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>, coefficient: f64) -> Self {
        Self {
            exponents,
            coefficient,
        }
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// A multivariate polynomial stored as a list of nonzero terms.
///
/// The term list is always canonical: sorted in graded lexicographic order,
/// no repeated exponent tuples, no zero (or round-off sized) coefficients, and
/// every term within the declared degree bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial")]
pub struct SparsePolynomial {
    n_vars: usize,
    degree: u32,
    terms: Vec<Monomial>,
}

#[derive(Deserialize)]
struct RawPolynomial {
    n_vars: usize,
    degree: u32,
    terms: Vec<Monomial>,
}

impl TryFrom<RawPolynomial> for SparsePolynomial {
    type Error = PolyError;

    fn try_from(raw: RawPolynomial) -> Result<Self, Self::Error> {
        SparsePolynomial::new(raw.n_vars, raw.degree, raw.terms)
    }
}

impl SparsePolynomial {
    pub fn new(
        n_vars: usize,
        degree: u32,
        terms: impl IntoIterator<Item = Monomial>,
    ) -> Result<Self, PolyError> {
        if n_vars == 0 {
            return Err(PolyError::NoVariables);
        }
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in terms {
            if t.exponents.len() != n_vars {
                return Err(PolyError::DimensionMismatch {
                    expected: n_vars,
                    got: t.exponents.len(),
                });
            }
            if t.total_degree() > degree {
                return Err(PolyError::DegreeBound {
                    term_degree: t.total_degree(),
                    bound: degree,
                });
            }
            if !t.coefficient.is_finite() {
                return Err(PolyError::NonFinite);
            }
            *acc.entry(t.exponents).or_insert(0.0) += t.coefficient;
        }
        Ok(Self::from_map(n_vars, degree, acc))
    }

    fn from_map(n_vars: usize, degree: u32, acc: BTreeMap<Vec<u32>, f64>) -> Self {
        let scale = acc.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let floor = PRUNE_RELATIVE * scale;
        let mut terms: Vec<Monomial> = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0 && c.abs() >= floor)
            .map(|(e, c)| Monomial::new(e, c))
            .collect();
        terms.sort_by(|a, b| grlex_cmp(&a.exponents, &b.exponents));
        Self {
            n_vars,
            degree,
            terms,
        }
    }

    pub fn zero(n_vars: usize, degree: u32) -> Self {
        assert!(n_vars > 0, "polynomial needs at least one variable");
        Self {
            n_vars,
            degree,
            terms: Vec::new(),
        }
    }

    pub fn constant(n_vars: usize, value: f64) -> Self {
        Self::new(n_vars, 0, [Monomial::new(vec![0; n_vars], value)])
            .expect("constant polynomial is well formed")
    }

    /// The coordinate polynomial `x_k`.
    pub fn variable(n_vars: usize, k: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[k] = 1;
        Self::new(n_vars, 1, [Monomial::new(e, 1.0)]).expect("variable polynomial is well formed")
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, with the
    /// degree bound set to the largest term degree.
    pub fn from_pairs(n_vars: usize, pairs: &[(&[u32], f64)]) -> Result<Self, PolyError> {
        let degree = pairs
            .iter()
            .map(|(e, _)| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0);
        Self::new(
            n_vars,
            degree,
            pairs.iter().map(|(e, c)| Monomial::new(e.to_vec(), *c)),
        )
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Declared degree bound `d_p`.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest total degree actually present (0 for the zero polynomial).
    pub fn total_degree(&self) -> u32 {
        self.terms.iter().map(Monomial::total_degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, k: usize) -> u32 {
        self.terms.iter().map(|t| t.exponents[k]).max().unwrap_or(0)
    }

    /// Largest combined degree over the variables `0..count`.
    pub fn degree_in_leading(&self, count: usize) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents[..count].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Coefficient of the given exponent tuple (0 if absent).
    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms
            .binary_search_by(|t| grlex_cmp(&t.exponents, exponents))
            .map(|i| self.terms[i].coefficient)
            .unwrap_or(0.0)
    }

    fn check_dim(&self, len: usize) -> Result<(), PolyError> {
        if len != self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                got: len,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * monomial_value(&t.exponents, x))
            .sum()
    }

    /// The univariate polynomial obtained by freezing every coordinate of `x`
    /// except `k`, which becomes the free variable.
    pub fn restrict_to_coordinate(
        &self,
        x: &[f64],
        k: usize,
    ) -> Result<UnivariatePolynomial, PolyError> {
        self.check_dim(x.len())?;
        if k >= self.n_vars {
            return Err(PolyError::CoordinateOutOfRange {
                index: k,
                n_vars: self.n_vars,
            });
        }
        let mut coeffs = vec![0.0; self.degree_in(k) as usize + 1];
        for t in &self.terms {
            let mut v = t.coefficient;
            for (j, (&e, &xj)) in t.exponents.iter().zip(x).enumerate() {
                if j != k && e > 0 {
                    v *= xj.powi(e as i32);
                }
            }
            coeffs[t.exponents[k] as usize] += v;
        }
        Ok(UnivariatePolynomial::new(coeffs))
    }

    /// Substitutes fixed values for the trailing `values.len()` variables and
    /// returns the polynomial in the remaining leading variables.
    pub fn substitute_tail(&self, values: &[f64]) -> Result<SparsePolynomial, PolyError> {
        if values.len() >= self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars - 1,
                got: values.len(),
            });
        }
        let keep = self.n_vars - values.len();
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in &self.terms {
            let v = t.coefficient * monomial_value(&t.exponents[keep..], values);
            *acc.entry(t.exponents[..keep].to_vec()).or_insert(0.0) += v;
        }
        Ok(Self::from_map(keep, self.degree, acc))
    }

    /// Ties the leading `count` variables to one: the result in
    /// `(t, x_rest)` equals `p(t, ..., t, x_rest)`.
    pub fn merge_leading(&self, count: usize) -> Result<SparsePolynomial, PolyError> {
        if count == 0 || count > self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                got: count,
            });
        }
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in &self.terms {
            let mut e = Vec::with_capacity(self.n_vars - count + 1);
            e.push(t.exponents[..count].iter().sum());
            e.extend_from_slice(&t.exponents[count..]);
            *acc.entry(e).or_insert(0.0) += t.coefficient;
        }
        Ok(Self::from_map(self.n_vars - count + 1, self.degree, acc))
    }

    /// The univariate polynomial `t -> p(t, t, ..., t)`.
    pub fn along_diagonal(&self) -> UnivariatePolynomial {
        let mut coeffs = vec![0.0; self.total_degree() as usize + 1];
        for t in &self.terms {
            coeffs[t.total_degree() as usize] += t.coefficient;
        }
        UnivariatePolynomial::new(coeffs)
    }

    pub fn scale(&self, factor: f64) -> SparsePolynomial {
        let acc = self
            .terms
            .iter()
            .map(|t| (t.exponents.clone(), t.coefficient * factor))
            .collect();
        Self::from_map(self.n_vars, self.degree, acc)
    }

    fn combine(&self, other: &SparsePolynomial, sign: f64) -> SparsePolynomial {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in &self.terms {
            *acc.entry(t.exponents.clone()).or_insert(0.0) += t.coefficient;
        }
        for t in &other.terms {
            *acc.entry(t.exponents.clone()).or_insert(0.0) += sign * t.coefficient;
        }
        Self::from_map(self.n_vars, self.degree.max(other.degree), acc)
    }
}

#[inline]
pub(crate) fn monomial_value(exponents: &[u32], x: &[f64]) -> f64 {
    let mut v = 1.0;
    for (&e, &xi) in exponents.iter().zip(x) {
        match e {
            0 => {}
            1 => v *= xi,
            2 => v *= xi * xi,
            _ => v *= xi.powi(e as i32),
        }
    }
    v
}

impl Add for &SparsePolynomial {
    type Output = SparsePolynomial;

    fn add(self, rhs: &SparsePolynomial) -> SparsePolynomial {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &SparsePolynomial {
    type Output = SparsePolynomial;

    fn sub(self, rhs: &SparsePolynomial) -> SparsePolynomial {
        self.combine(rhs, -1.0)
    }
}

impl Neg for &SparsePolynomial {
    type Output = SparsePolynomial;

    fn neg(self) -> SparsePolynomial {
        self.scale(-1.0)
    }
}

impl Mul for &SparsePolynomial {
    type Output = SparsePolynomial;

    fn mul(self, rhs: &SparsePolynomial) -> SparsePolynomial {
        assert_eq!(self.n_vars, rhs.n_vars, "variable count mismatch");
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for a in &self.terms {
            for b in &rhs.terms {
                let e: Vec<u32> = a
                    .exponents
                    .iter()
                    .zip(&b.exponents)
                    .map(|(x, y)| x + y)
                    .collect();
                *acc.entry(e).or_insert(0.0) += a.coefficient * b.coefficient;
            }
        }
        SparsePolynomial::from_map(self.n_vars, self.degree + rhs.degree, acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, n_vars: usize, degree: u32, n_terms: usize) -> SparsePolynomial {
        let terms = (0..n_terms).map(|_| {
            let mut e = vec![0u32; n_vars];
            let mut budget = rng.random_range(0..=degree);
            while budget > 0 {
                e[rng.random_range(0..n_vars)] += 1;
                budget -= 1;
            }
            Monomial::new(e, rng.random_range(-2.0..2.0))
        });
        SparsePolynomial::new(n_vars, degree, terms).unwrap()
    }

    // Term-by-term evaluation with repeated multiplication, no powi.
    fn naive_eval(p: &SparsePolynomial, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in p.terms() {
            let mut v = t.coefficient;
            for (k, &e) in t.exponents.iter().enumerate() {
                for _ in 0..e {
                    v *= x[k];
                }
            }
            total += v;
        }
        total
    }

    #[test]
    fn eval_small_examples() {
        let p = SparsePolynomial::from_pairs(2, &[(&[2, 1], 2.0), (&[0, 0], 3.0)]).unwrap();
        assert_eq!(p.eval(&[1.0, 2.0]).unwrap(), 7.0);
        let z = SparsePolynomial::zero(3, 2);
        assert_eq!(z.eval(&[0.3, -1.0, 9.0]).unwrap(), 0.0);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn eval_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_poly(&mut rng, 5, 6, 50);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
            let a = p.eval(&x).unwrap();
            let b = naive_eval(&p, &x);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn canonical_form_merges_and_prunes() {
        let p = SparsePolynomial::new(
            2,
            2,
            vec![
                Monomial::new(vec![1, 0], 1.0),
                Monomial::new(vec![1, 0], -1.0),
                Monomial::new(vec![0, 2], 5.0),
                Monomial::new(vec![0, 0], 1e-16),
                Monomial::new(vec![0, 2], 1.0),
            ],
        )
        .unwrap();
        assert_eq!(p.terms(), &[Monomial::new(vec![0, 2], 6.0)]);
        assert!(SparsePolynomial::new(2, 1, [Monomial::new(vec![1, 1], 1.0)]).is_err());
    }

    #[test]
    fn restriction_examples() {
        let p = SparsePolynomial::from_pairs(2, &[(&[2, 1], 1.0), (&[0, 3], 1.0)]).unwrap();
        let q = p.restrict_to_coordinate(&[f64::NAN, 2.0], 0).unwrap();
        assert_eq!(q.coefficients(), &[8.0, 0.0, 2.0]);
        let q = p.restrict_to_coordinate(&[3.0, f64::NAN], 1).unwrap();
        assert_eq!(q.coefficients(), &[0.0, 9.0, 0.0, 1.0]);
        assert!(p.restrict_to_coordinate(&[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn substitute_tail_and_diagonal() {
        // x0*x1 + x1^2 + x0 with x1 = 2 -> 3*x0 + 4
        let p = SparsePolynomial::from_pairs(2, &[(&[1, 1], 1.0), (&[0, 2], 1.0), (&[1, 0], 1.0)])
            .unwrap();
        let r = p.substitute_tail(&[2.0]).unwrap();
        assert_eq!(r.n_vars(), 1);
        assert_eq!(r.coefficient(&[1]), 3.0);
        assert_eq!(r.coefficient(&[0]), 4.0);
        let d = p.along_diagonal();
        assert_eq!(d.coefficients(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn product_expands() {
        let x = SparsePolynomial::variable(2, 0);
        let y = SparsePolynomial::variable(2, 1);
        let s = &x + &y;
        let sq = &s * &s;
        assert_eq!(sq.coefficient(&[2, 0]), 1.0);
        assert_eq!(sq.coefficient(&[1, 1]), 2.0);
        assert_eq!(sq.coefficient(&[0, 2]), 1.0);
        assert!((&sq - &sq).is_zero());
    }

    #[test]
    fn json_layout() {
        let p = SparsePolynomial::from_pairs(2, &[(&[1, 0], 1.5)]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"n_vars":2,"degree":1,"terms":[{"e":[1,0],"c":1.5}]}"#);
        let bad = r#"{"n_vars":2,"degree":1,"terms":[{"e":[1,1],"c":1.5}]}"#;
        assert!(serde_json::from_str::<SparsePolynomial>(bad).is_err());
    }

    proptest! {
        #[test]
        fn merged_leading_variables_evaluate_on_the_tie(seed in any::<u64>(), count in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, 5, 3, 25);
            let merged = p.merge_leading(count).unwrap();
            prop_assert_eq!(merged.n_vars(), 6 - count);
            let t: f64 = rng.random_range(-1.0..1.0);
            let rest: Vec<f64> = (count..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let full: Vec<f64> = std::iter::repeat_n(t, count).chain(rest.iter().copied()).collect();
            let tied: Vec<f64> = std::iter::once(t).chain(rest.iter().copied()).collect();
            let (a, b) = (p.eval(&full).unwrap(), merged.eval(&tied).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn eval_is_linear_in_coefficients(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, 4, 4, 20);
            let r = random_poly(&mut rng, 4, 4, 20);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let combo = &p.scale(a) + &r.scale(b);
            let lhs = combo.eval(&x).unwrap();
            let rhs = a * p.eval(&x).unwrap() + b * r.eval(&x).unwrap();
            let scale = (a * p.eval(&x).unwrap()).abs() + (b * r.eval(&x).unwrap()).abs();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn canonical_after_arithmetic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, 3, 3, 15);
            let r = random_poly(&mut rng, 3, 3, 15);
            for q in [&p + &r, &p - &r, &p * &r, p.scale(0.5)] {
                for w in q.terms().windows(2) {
                    prop_assert_eq!(grlex_cmp(&w[0].exponents, &w[1].exponents), std::cmp::Ordering::Less);
                }
                prop_assert!(q.terms().iter().all(|t| t.coefficient != 0.0));
                prop_assert!(q.terms().iter().all(|t| t.total_degree() <= q.degree()));
            }
        }

        #[test]
        fn restriction_reproduces_eval(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, 4, 5, 30);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let full = p.eval(&x).unwrap();
            for k in 0..4 {
                let q = p.restrict_to_coordinate(&x, k).unwrap();
                prop_assert!((q.eval(x[k]) - full).abs() <= 1e-12 * full.abs().max(1.0));
                for _ in 0..20 {
                    let t = rng.random_range(-1.5..1.5);
                    let mut y = x.clone();
                    y[k] = t;
                    let direct = p.eval(&y).unwrap();
                    prop_assert!((q.eval(t) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
                }
            }
        }
    }
}
