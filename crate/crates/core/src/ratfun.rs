//! Exact univariate polynomial and rational-function arithmetic over Q.
//!
//! This is the input layer: connections arrive as matrices of rational
//! expressions in a global coordinate z, and all re-expansion at a
//! point is done exactly here before anything is mapped into a p-adic
//! context.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Dense polynomial over Q; coefficient i belongs to z^i, trailing
/// zeros trimmed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly(pub Vec<BigRational>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![])
    }

    pub fn one() -> Self {
        Poly(vec![BigRational::one()])
    }

    pub fn constant(c: BigRational) -> Self {
        Poly(vec![c]).trimmed()
    }

    pub fn x() -> Self {
        Poly(vec![BigRational::zero(), BigRational::one()])
    }

    pub fn from_coeffs(c: Vec<BigRational>) -> Self {
        Poly(c).trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.0.last().map(|c| c.is_zero()).unwrap_or(false) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.0.len() - 1)
        }
    }

    pub fn coeff(&self, i: usize) -> BigRational {
        self.0.get(i).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        Poly((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect()).trimmed()
    }

    pub fn neg(&self) -> Self {
        Poly(self.0.iter().map(|c| -c).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out).trimmed()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Poly(self.0.iter().map(|a| a * c).collect()).trimmed()
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut result = Poly::one();
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        result
    }

    /// Euclidean division; panics if `other` is zero.
    pub fn div_rem(&self, other: &Self) -> (Self, Self) {
        assert!(!other.is_zero(), "division by the zero polynomial");
        let mut rem = self.0.clone();
        let dlen = other.0.len();
        if rem.len() < dlen {
            return (Poly::zero(), self.clone());
        }
        let lead = other.0.last().unwrap().clone();
        let mut quot = vec![BigRational::zero(); rem.len() - dlen + 1];
        while rem.len() >= dlen {
            let last = rem.last().unwrap().clone();
            if last.is_zero() {
                rem.pop();
                continue;
            }
            let shift = rem.len() - dlen;
            let q = last / &lead;
            quot[shift] = q.clone();
            for i in 0..dlen {
                let v = &other.0[i] * &q;
                rem[shift + i] -= v;
            }
            rem.pop();
        }
        (Poly(quot).trimmed(), Poly(rem).trimmed())
    }

    /// Monic gcd.
    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        if a.is_zero() {
            return a;
        }
        let lead = a.0.last().unwrap().clone();
        a.scale(&(BigRational::one() / lead))
    }

    pub fn derivative(&self) -> Self {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigRational::from(BigInt::from(i)))
                .collect(),
        )
        .trimmed()
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.0.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    /// Compose with z -> z + c (Taylor re-centering).
    pub fn shift(&self, c: &BigRational) -> Self {
        let mut out = Poly::zero();
        let base = Poly(vec![c.clone(), BigRational::one()]);
        for coeff in self.0.iter().rev() {
            out = out.mul(&base).add(&Poly::constant(coeff.clone()));
        }
        out
    }

    /// Compose self(g) for a polynomial g.
    pub fn compose(&self, g: &Self) -> Self {
        let mut out = Poly::zero();
        for coeff in self.0.iter().rev() {
            out = out.mul(g).add(&Poly::constant(coeff.clone()));
        }
        out
    }

    /// Multiplicity of the root c.
    pub fn root_multiplicity(&self, c: &BigRational) -> usize {
        if self.is_zero() {
            return 0;
        }
        let mut m = 0;
        let mut f = self.clone();
        let divisor = Poly(vec![-c.clone(), BigRational::one()]);
        loop {
            if !f.eval(c).is_zero() {
                return m;
            }
            let (q, r) = f.div_rem(&divisor);
            debug_assert!(r.is_zero());
            f = q;
            m += 1;
        }
    }

    /// Order of vanishing at 0 (number of leading zero coefficients).
    pub fn ord_at_zero(&self) -> Option<usize> {
        self.0.iter().position(|c| !c.is_zero())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(fm, "0");
        }
        let terms: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{}", c),
                1 => format!("({})*z", c),
                _ => format!("({})*z^{}", c, i),
            })
            .collect();
        write!(fm, "{}", terms.join(" + "))
    }
}

/// Reduced fraction of polynomials; denominator monic, gcd 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalFunction {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFunction {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::precondition("zero denominator"));
        }
        Ok(Self::reduce(num, den))
    }

    fn reduce(num: Poly, den: Poly) -> Self {
        if num.is_zero() {
            return RationalFunction {
                num,
                den: Poly::one(),
            };
        }
        let g = num.gcd(&den);
        let (num, r1) = num.div_rem(&g);
        debug_assert!(r1.is_zero());
        let (den, r2) = den.div_rem(&g);
        debug_assert!(r2.is_zero());
        let lead = den.0.last().unwrap().clone();
        let inv = BigRational::one() / lead;
        RationalFunction {
            num: num.scale(&inv),
            den: den.scale(&inv),
        }
    }

    pub fn zero() -> Self {
        RationalFunction {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Self {
        RationalFunction {
            num: Poly::one(),
            den: Poly::one(),
        }
    }

    pub fn constant(c: BigRational) -> Self {
        RationalFunction {
            num: Poly::constant(c),
            den: Poly::one(),
        }
    }

    pub fn from_poly(p: Poly) -> Self {
        RationalFunction {
            num: p,
            den: Poly::one(),
        }
    }

    pub fn var() -> Self {
        Self::from_poly(Poly::x())
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::reduce(
            self.num
                .mul(&other.den)
                .add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn neg(&self) -> Self {
        RationalFunction {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::reduce(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        if other.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::reduce(
            self.num.mul(&other.den),
            self.den.mul(&other.num),
        ))
    }

    pub fn pow(&self, e: i32) -> Result<Self> {
        if e >= 0 {
            Ok(RationalFunction {
                num: self.num.pow(e as u32),
                den: self.den.pow(e as u32),
            })
        } else {
            Self::one().div(self)?.pow(-e)
        }
    }

    pub fn derivative(&self) -> Self {
        Self::reduce(
            self.num
                .derivative()
                .mul(&self.den)
                .sub(&self.num.mul(&self.den.derivative())),
            self.den.mul(&self.den),
        )
    }

    /// f'/f.
    pub fn log_derivative(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::precondition("dlog of the zero function"));
        }
        self.derivative().div(self)
    }

    /// None at a pole.
    pub fn eval(&self, t: &BigRational) -> Option<BigRational> {
        let d = self.den.eval(t);
        if d.is_zero() {
            None
        } else {
            Some(self.num.eval(t) / d)
        }
    }

    /// Order of vanishing at c (negative at a pole).
    pub fn ord_at(&self, c: &BigRational) -> i64 {
        if self.is_zero() {
            return i64::MAX;
        }
        self.num.root_multiplicity(c) as i64 - self.den.root_multiplicity(c) as i64
    }

    /// Re-center at c: returns f(c + x) as a function of x.
    pub fn shift(&self, c: &BigRational) -> Self {
        Self::reduce(self.num.shift(c), self.den.shift(c))
    }

    /// Compose f(g) for a polynomial substitution g.
    pub fn compose_poly(&self, g: &Poly) -> Self {
        Self::reduce(self.num.compose(g), self.den.compose(g))
    }

    /// Taylor coefficients at 0 through degree trunc - 1; requires no
    /// pole at 0.
    pub fn series_at_zero(&self, trunc: usize) -> Result<Vec<BigRational>> {
        let d0 = self.den.coeff(0);
        if d0.is_zero() {
            return Err(Error::precondition(
                "series expansion at a pole of the denominator",
            ));
        }
        let mut out = vec![BigRational::zero(); trunc];
        // out = num/den: out_k = (num_k - sum_{j<k} out_j den_{k-j}) / d0
        for k in 0..trunc {
            let mut acc = self.num.coeff(k);
            for j in 0..k {
                acc -= &out[j] * self.den.coeff(k - j);
            }
            out[k] = acc / &d0;
        }
        Ok(out)
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == Poly::one() {
            write!(fm, "{}", self.num)
        } else {
            write!(fm, "({}) / ({})", self.num, self.den)
        }
    }
}

/// Rational roots of a polynomial over Q, with multiplicity, via the
/// integer rational-root bound after clearing denominators.
pub fn rational_roots(p: &Poly) -> Vec<(BigRational, usize)> {
    if p.is_zero() || p.degree() == Some(0) {
        return vec![];
    }
    // clear denominators
    let mut lcm = BigInt::one();
    for c in &p.0 {
        let d = c.denom();
        let g = num_integer::Integer::gcd(&lcm, d);
        lcm = &lcm / g * d;
    }
    let ints: Vec<BigInt> = p
        .0
        .iter()
        .map(|c| (c * BigRational::from(lcm.clone())).to_integer())
        .collect();
    let ord0 = ints.iter().position(|c| !c.is_zero()).unwrap_or(0);
    let mut roots = Vec::new();
    if ord0 > 0 {
        roots.push((BigRational::zero(), ord0));
    }
    let low = ints[ord0].abs();
    let high = ints.last().unwrap().abs();
    let mut candidates = Vec::new();
    for a in divisors(&low) {
        for b in divisors(&high) {
            let r = BigRational::new(a.clone(), b.clone());
            candidates.push(r.clone());
            candidates.push(-r);
        }
    }
    candidates.sort();
    candidates.dedup();
    for c in candidates {
        let m = p.root_multiplicity(&c);
        if m > 0 {
            roots.push((c, m));
        }
    }
    roots
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let mut out = Vec::new();
    if n.is_zero() {
        return out;
    }
    let mut d = BigInt::one();
    loop {
        if (&d * &d) > *n {
            break;
        }
        if (n % &d).is_zero() {
            out.push(d.clone());
            out.push(n / &d);
        }
        d += 1;
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn qz(n: i64) -> BigRational {
        q(n, 1)
    }

    #[test]
    fn div_rem_roundtrip() {
        let a = Poly::from_coeffs(vec![qz(1), qz(0), qz(3), qz(2)]);
        let b = Poly::from_coeffs(vec![qz(-1), qz(1)]);
        let (quot, rem) = a.div_rem(&b);
        assert_eq!(quot.mul(&b).add(&rem), a);
    }

    #[test]
    fn gcd_of_common_factor() {
        let f = Poly::from_coeffs(vec![qz(-1), qz(1)]); // z - 1
        let a = f.mul(&Poly::from_coeffs(vec![qz(2), qz(1)]));
        let b = f.mul(&Poly::from_coeffs(vec![qz(5), qz(0), qz(1)]));
        assert_eq!(a.gcd(&b), f);
    }

    #[test]
    fn reduce_cancels() {
        let f = RationalFunction::new(
            Poly::from_coeffs(vec![qz(0), qz(0), qz(1)]), // z^2
            Poly::from_coeffs(vec![qz(0), qz(1)]),        // z
        )
        .unwrap();
        assert_eq!(f.num, Poly::x());
        assert_eq!(f.den, Poly::one());
    }

    #[test]
    fn log_derivative_additive() {
        let f = RationalFunction::from_poly(Poly::from_coeffs(vec![qz(-1), qz(1)]));
        let g = RationalFunction::from_poly(Poly::from_coeffs(vec![qz(2), qz(0), qz(1)]));
        let lhs = f.mul(&g).log_derivative().unwrap();
        let rhs = f
            .log_derivative()
            .unwrap()
            .add(&g.log_derivative().unwrap());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn ord_and_shift() {
        // f = z^2 (1 - z)
        let f = RationalFunction::from_poly(
            Poly::from_coeffs(vec![qz(0), qz(0), qz(1), qz(-1)]),
        );
        assert_eq!(f.ord_at(&qz(0)), 2);
        assert_eq!(f.ord_at(&qz(1)), 1);
        assert_eq!(f.ord_at(&qz(2)), 0);
        let shifted = f.shift(&qz(1));
        assert_eq!(shifted.ord_at(&qz(0)), 1);
    }

    #[test]
    fn series_geometric() {
        // 1/(1-z) = 1 + z + z^2 + ...
        let f = RationalFunction::new(Poly::one(), Poly::from_coeffs(vec![qz(1), qz(-1)]))
            .unwrap();
        let s = f.series_at_zero(5).unwrap();
        assert!(s.iter().all(|c| c.is_one()));
    }

    #[test]
    fn series_at_pole_rejected() {
        let f = RationalFunction::new(Poly::one(), Poly::x()).unwrap();
        assert!(f.series_at_zero(3).is_err());
    }

    #[test]
    fn rational_roots_with_multiplicity() {
        // (z - 1)^2 (2z + 3) z
        let p = Poly::from_coeffs(vec![qz(-1), qz(1)])
            .pow(2)
            .mul(&Poly::from_coeffs(vec![qz(3), qz(2)]))
            .mul(&Poly::x());
        let roots = rational_roots(&p);
        assert!(roots.contains(&(qz(0), 1)));
        assert!(roots.contains(&(qz(1), 2)));
        assert!(roots.contains(&(q(-3, 2), 1)));
    }
}
